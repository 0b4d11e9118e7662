#include "twostage/estimands.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <regex>
#include <stdexcept>
#include <string>

namespace twostage {

namespace {

constexpr std::string_view kKindNames[] = {"DED", "DEY", "SED", "SEY", "OEY", "CADE", "CASE", "CAOE"};

// Population quantities averaged cluster-then-population.
enum Pop { kDey0, kDey1, kDed0, kDed1, kSey0, kSey1, kSed0, kSed1, kOey, kPopCount };
// Complier quantities per base mechanism, flat over compliers.
enum Comp { kCade0, kCade1, kCase0, kCase1, kCaoe, kCompCount };

struct AllEstimands {
  std::array<double, kPopCount> pop{};
  std::array<std::array<double, kCompCount>, 2> comp{};
  std::array<long, 2> compliers{};
};

int receipt_contrast(Stratum g, int z_hi, Mechanism a_hi, int z_lo, Mechanism a_lo) {
  return potential_receipt(g, z_hi, a_hi) - potential_receipt(g, z_lo, a_lo);
}

AllEstimands compute_all(std::span<const PotentialTable> tables, std::span<const Stratum> g,
                         const ClusterLayout& layout, bool need_strata) {
  const int units = layout.units();
  if (static_cast<int>(tables.size()) != units || (need_strata && static_cast<int>(g.size()) != units)) {
    throw std::invalid_argument("estimands: tables/strata do not match the cluster layout");
  }
  std::vector<std::array<double, kPopCount>> cluster_sum(layout.clusters());
  AllEstimands out;
  for (int i = 0; i < units; ++i) {
    const PotentialTable& t = tables[i];
    const int j = layout.cluster_of[i];
    const double s0 = layout.share(j, Mechanism::a0);
    const double s1 = layout.share(j, Mechanism::a1);
    const double dey0 = t.at(1, Mechanism::a0) - t.at(0, Mechanism::a0);
    const double dey1 = t.at(1, Mechanism::a1) - t.at(0, Mechanism::a1);
    const double sey0 = t.at(0, Mechanism::a1) - t.at(0, Mechanism::a0);
    const double sey1 = t.at(1, Mechanism::a1) - t.at(1, Mechanism::a0);
    const double oey = s1 * dey1 - s0 * dey0 + sey0;

    auto& cs = cluster_sum[j];
    cs[kDey0] += dey0;
    cs[kDey1] += dey1;
    cs[kSey0] += sey0;
    cs[kSey1] += sey1;
    cs[kOey] += oey;
    if (!need_strata) continue;

    const Stratum gi = g[i];
    cs[kDed0] += receipt_contrast(gi, 1, Mechanism::a0, 0, Mechanism::a0);
    cs[kDed1] += receipt_contrast(gi, 1, Mechanism::a1, 0, Mechanism::a1);
    cs[kSed0] += receipt_contrast(gi, 0, Mechanism::a1, 0, Mechanism::a0);
    cs[kSed1] += receipt_contrast(gi, 1, Mechanism::a1, 1, Mechanism::a0);
    for (int b = 0; b < 2; ++b) {
      if (!is_complier(gi, static_cast<Mechanism>(b))) continue;
      ++out.compliers[b];
      auto& c = out.comp[b];
      c[kCade0] += dey0;
      c[kCade1] += dey1;
      c[kCase0] += sey0;
      c[kCase1] += sey1;
      c[kCaoe] += oey;
    }
  }

  long total = 0;
  for (int n : layout.size) total += n;
  for (int j = 0; j < layout.clusters(); ++j) {
    const double n = layout.size[j];
    if (n <= 0) continue;
    for (int k = 0; k < kPopCount; ++k) out.pop[k] += n * (cluster_sum[j][k] / n);
  }
  for (double& v : out.pop) v /= static_cast<double>(total);
  for (int b = 0; b < 2; ++b) {
    if (out.compliers[b] == 0) continue;
    for (double& v : out.comp[b]) v /= static_cast<double>(out.compliers[b]);
  }
  return out;
}

std::optional<double> pick(const AllEstimands& all, const EstimandRequest& r) {
  switch (r.kind) {
    case EstimandKind::DEY: return all.pop[r.target == 0 ? kDey0 : kDey1];
    case EstimandKind::DED: return all.pop[r.target == 0 ? kDed0 : kDed1];
    case EstimandKind::SEY: return all.pop[r.target == 0 ? kSey0 : kSey1];
    case EstimandKind::SED: return all.pop[r.target == 0 ? kSed0 : kSed1];
    case EstimandKind::OEY: return all.pop[kOey];
    default: break;
  }
  const int b = index_of(*r.base);
  if (all.compliers[b] == 0) return std::nullopt;
  const auto& c = all.comp[b];
  switch (r.kind) {
    case EstimandKind::CADE: return c[r.target == 0 ? kCade0 : kCade1];
    case EstimandKind::CASE: return c[r.target == 0 ? kCase0 : kCase1];
    default: return c[kCaoe];
  }
}

}  // namespace

bool is_complier_kind(EstimandKind kind) {
  return kind == EstimandKind::CADE || kind == EstimandKind::CASE || kind == EstimandKind::CAOE;
}

std::string EstimandRequest::name() const {
  std::string out(kKindNames[static_cast<int>(kind)]);
  out += '(';
  switch (kind) {
    case EstimandKind::DED:
    case EstimandKind::DEY:
    case EstimandKind::CADE:
      out += to_string(static_cast<Mechanism>(target));
      break;
    case EstimandKind::SED:
    case EstimandKind::SEY:
    case EstimandKind::CASE:
      out += std::to_string(target);
      break;
    case EstimandKind::OEY:
    case EstimandKind::CAOE:
      out += "a0,a1";
      break;
  }
  if (base) {
    out += ';';
    out += to_string(*base);
  }
  out += ')';
  return out;
}

void EstimandRequest::validate() const {
  if (target != 0 && target != 1) throw std::invalid_argument("estimand: target must be 0/1 (or a0/a1)");
  if (is_complier_kind(kind) != base.has_value()) {
    throw std::invalid_argument("estimand: a base mechanism is required exactly for CADE/CASE/CAOE");
  }
}

EstimandRequest EstimandRequest::parse(std::string_view text) {
  static const std::regex kPattern(R"(^(DED|DEY|SED|SEY|OEY|CADE|CASE|CAOE)\(([^;]*)(?:;(a[01]))?\)$)");
  std::cmatch m;
  if (!std::regex_match(text.begin(), text.end(), m, kPattern)) {
    throw std::invalid_argument("estimand: cannot parse '" + std::string(text) + "'");
  }
  EstimandRequest r;
  const std::string kind = m[1].str();
  for (int k = 0; k < 8; ++k) {
    if (kKindNames[k] == kind) r.kind = static_cast<EstimandKind>(k);
  }
  const std::string arg = m[2].str();
  switch (r.kind) {
    case EstimandKind::DED:
    case EstimandKind::DEY:
    case EstimandKind::CADE: {
      auto a = parse_mechanism(arg);
      if (!a) throw std::invalid_argument("estimand: expected a0/a1 in '" + std::string(text) + "'");
      r.target = index_of(*a);
      break;
    }
    case EstimandKind::SED:
    case EstimandKind::SEY:
    case EstimandKind::CASE:
      if (arg != "0" && arg != "1") throw std::invalid_argument("estimand: expected 0/1 in '" + std::string(text) + "'");
      r.target = arg == "1" ? 1 : 0;
      break;
    case EstimandKind::OEY:
    case EstimandKind::CAOE:
      if (arg != "a0,a1") throw std::invalid_argument("estimand: expected a0,a1 in '" + std::string(text) + "'");
      break;
  }
  if (m[3].matched) r.base = parse_mechanism(m[3].str());
  r.validate();
  return r;
}

std::vector<EstimandRequest> all_estimands() {
  using K = EstimandKind;
  const auto a0 = Mechanism::a0;
  const auto a1 = Mechanism::a1;
  return {
      {K::CADE, 1, a1}, {K::CADE, 0, a0}, {K::DEY, 1, {}},  {K::DEY, 0, {}},  {K::DED, 1, {}},
      {K::DED, 0, {}},  {K::SEY, 1, {}},  {K::SEY, 0, {}},  {K::SED, 1, {}},  {K::SED, 0, {}},
      {K::OEY, 0, {}},  {K::CAOE, 0, a0}, {K::CAOE, 0, a1}, {K::CADE, 1, a0}, {K::CADE, 0, a1},
      {K::CASE, 0, a0}, {K::CASE, 1, a0}, {K::CASE, 0, a1}, {K::CASE, 1, a1},
  };
}

std::vector<EstimandRequest> study_estimands() {
  using K = EstimandKind;
  return {{K::CADE, 0, Mechanism::a0}, {K::CADE, 1, Mechanism::a1}, {K::DEY, 0, {}},
          {K::DEY, 1, {}},             {K::DED, 0, {}},             {K::DED, 1, {}}};
}

DirectEffects direct_effects(std::span<const PotentialTable> tables, std::span<const Stratum> g,
                             const ClusterLayout& layout) {
  const auto all = compute_all(tables, g, layout, true);
  return {{all.pop[kDey0], all.pop[kDey1]}, {all.pop[kDed0], all.pop[kDed1]}};
}

SpilloverEffects spillover_effects(std::span<const PotentialTable> tables, std::span<const Stratum> g,
                                   const ClusterLayout& layout) {
  const auto all = compute_all(tables, g, layout, true);
  return {{all.pop[kSey0], all.pop[kSey1]}, {all.pop[kSed0], all.pop[kSed1]}};
}

double overall_effect(std::span<const PotentialTable> tables, const ClusterLayout& layout) {
  return compute_all(tables, {}, layout, false).pop[kOey];
}

std::optional<double> complier_effect(std::span<const PotentialTable> tables, std::span<const Stratum> g,
                                      const ClusterLayout& layout, const EstimandRequest& request) {
  request.validate();
  if (!is_complier_kind(request.kind)) throw std::invalid_argument("complier_effect: not a complier estimand");
  return pick(compute_all(tables, g, layout, true), request);
}

double unit_overall_effect(const PotentialTable& t, double share_a0, double share_a1) {
  const double dey0 = t.at(1, Mechanism::a0) - t.at(0, Mechanism::a0);
  const double dey1 = t.at(1, Mechanism::a1) - t.at(0, Mechanism::a1);
  const double sey0 = t.at(0, Mechanism::a1) - t.at(0, Mechanism::a0);
  return share_a1 * dey1 - share_a0 * dey0 + sey0;
}

EstimandEvaluator::EstimandEvaluator(ClusterLayout layout, std::vector<EstimandRequest> requests)
    : layout_(std::move(layout)), requests_(std::move(requests)) {
  for (const auto& r : requests_) r.validate();
}

void EstimandEvaluator::evaluate(std::span<const PotentialTable> tables, std::span<const Stratum> g,
                                 std::vector<std::optional<double>>& out) const {
  const auto all = compute_all(tables, g, layout_, true);
  out.resize(requests_.size());
  for (std::size_t k = 0; k < requests_.size(); ++k) out[k] = pick(all, requests_[k]);
}

double quantile_sorted(std::span<const double> sorted, double prob) {
  if (sorted.empty()) throw std::invalid_argument("quantile: empty input");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * prob;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

EstimandSummary summarize(std::span<const double> values) {
  std::vector<double> v;
  v.reserve(values.size());
  for (double x : values) {
    if (std::isfinite(x)) v.push_back(x);
  }
  if (v.size() < 2) throw std::invalid_argument("summarize: need at least 2 finite draws");
  std::sort(v.begin(), v.end());
  EstimandSummary s;
  double total = 0.0;
  for (double x : v) total += x;
  s.mean = total / static_cast<double>(v.size());
  s.median = quantile_sorted(v, 0.5);
  s.q025 = quantile_sorted(v, 0.025);
  s.q975 = quantile_sorted(v, 0.975);
  s.n_draws = static_cast<int>(v.size());
  return s;
}

EstimandAccumulator::EstimandAccumulator(std::vector<EstimandRequest> requests)
    : requests_(std::move(requests)), values_(requests_.size()), skipped_(requests_.size(), 0) {}

void EstimandAccumulator::add(const std::vector<std::optional<double>>& values) {
  for (std::size_t k = 0; k < requests_.size(); ++k) {
    if (values[k]) {
      values_[k].push_back(*values[k]);
    } else {
      ++skipped_[k];
    }
  }
}

void EstimandAccumulator::merge(const EstimandAccumulator& other) {
  if (other.requests_ != requests_) throw std::invalid_argument("accumulator: request lists differ");
  for (std::size_t k = 0; k < requests_.size(); ++k) {
    values_[k].insert(values_[k].end(), other.values_[k].begin(), other.values_[k].end());
    skipped_[k] += other.skipped_[k];
  }
}

std::vector<NamedSummary> EstimandAccumulator::summaries() const {
  std::vector<NamedSummary> out;
  for (std::size_t k = 0; k < requests_.size(); ++k) {
    const auto bad = std::count_if(values_[k].begin(), values_[k].end(), [](double v) { return !std::isfinite(v); });
    const auto finite = static_cast<int>(values_[k].size() - bad);
    EstimandSummary s;
    if (finite >= 2) {
      s = summarize(values_[k]);
    } else {
      s.mean = s.median = s.q025 = s.q975 = std::numeric_limits<double>::quiet_NaN();
      s.n_draws = finite;
    }
    out.push_back({requests_[k].name(), s, skipped_[k], static_cast<int>(bad)});
  }
  return out;
}

}  // namespace twostage
