#include "twostage/simharness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <stdexcept>
#include <thread>

#include "twostage/posterior.hpp"

namespace twostage {

namespace {

constexpr std::uint64_t kTruthStream = std::numeric_limits<std::uint64_t>::max();

// Cells in canonical order (cc x4, aa x2, nn x2, ca x3, nc x3, na x2).
ModelParams<LogNormalCell> lognormal_table() {
  ModelParams<LogNormalCell> m;
  m.pi = {0.4, 0.2, 0.2, 0.1, 0.05, 0.05};
  m.cells = {{
      {0.1, 5, 1.5},  {0.2, 7.5, 2.5}, {0.1, 5, 1.5},   {0.2, 7.5, 2.5},  // cc
      {0.05, 10, 2},  {0.05, 10, 2.5},                                    // aa
      {0.03, 3, 2},   {0.03, 3, 2.5},                                     // nn
      {0.1, 5, 1.5},  {0.2, 8, 1.5},   {0.1, 10, 2.5},                    // ca
      {0.02, 2, 2},   {0.08, 4, 2.5},  {0.18, 8, 2.5},                    // nc
      {0.04, 2, 1.5}, {0.06, 10, 1.5},                                    // na
  }};
  return m;
}

ModelParams<GammaCell> gamma_table() {
  ModelParams<GammaCell> m;
  m.pi = {0.3, 0.2, 0.17, 0.13, 0.1, 0.1};
  m.cells = {{
      {0.1, 10, 100},   {0.2, 12, 125},  {0.1, 10, 100},  {0.2, 12, 125},  // cc
      {0.05, 13, 100},  {0.05, 13, 100},                                   // aa
      {0.05, 8, 90},    {0.05, 8, 90},                                     // nn
      {0.1, 10, 100},   {0.2, 11, 100},  {0.1, 12, 83},                    // ca
      {0.03, 9, 90},    {0.1, 10, 100},  {0.15, 13, 125},                  // nc
      {0.04, 8.5, 100}, {0.06, 13, 125},                                   // na
  }};
  return m;
}

Stratum draw_stratum(const std::array<double, kNumStrata>& pi, Rng& rng) {
  const double u = draw_uniform(rng);
  double acc = 0.0;
  for (int k = 0; k < kNumStrata - 1; ++k) {
    acc += pi[k];
    if (u < acc) return static_cast<Stratum>(k);
  }
  return Stratum::na;
}

// One draw per distinct cell; collapsed slots share it.
template <class Cell>
PotentialTable draw_table(const ModelParams<Cell>& m, Stratum g, Rng& rng) {
  PotentialTable t;
  for (int s = 0; s < kNumSlots; ++s) {
    const int c = cell_index(g, s);
    int prior = -1;
    for (int r = 0; r < s; ++r) {
      if (cell_index(g, r) == c) prior = r;
    }
    t.y[s] = prior >= 0 ? t.y[prior] : sample_outcome(m.cells[c], rng);
    t.w[s] = t.y[s] == 0.0 ? 1 : 0;
  }
  return t;
}

template <class Cell>
SimulatedData generate_impl(const ModelParams<Cell>& m, const DesignConfig& design, Rng& rng) {
  const AssignmentRealization assignment = sample_assignment(design, rng);
  int units = 0;
  for (int n : design.cluster_sizes) units += n;

  SimulatedData sim;
  sim.g.reserve(units);
  sim.tables.reserve(units);
  std::vector<UnitRecord> records;
  records.reserve(units);
  for (int j = 0; j < design.clusters(); ++j) {
    const Mechanism a = assignment.mechanisms[j];
    for (int i = 0; i < design.cluster_sizes[j]; ++i) {
      const Stratum g = draw_stratum(m.pi, rng);
      PotentialTable t = draw_table(m, g, rng);
      const int z = assignment.z[j][i];
      t.observed_slot = static_cast<std::uint8_t>(slot_index(z, a));
      records.push_back({std::to_string(j + 1), std::to_string(i + 1), a, z, potential_receipt(g, z, a),
                         t.y[t.observed_slot]});
      sim.g.push_back(g);
      sim.tables.push_back(t);
    }
  }
  sim.data = Dataset::from_records(std::move(records));
  sim.layout = sim.data.layout(std::array<double, 2>{design.q0, design.q1});

  LatentState<Cell> truth{sim.g, sim.tables, m, {}};
  check_state(truth, sim.data);
  return sim;
}

struct RunningMean {
  long n = 0;
  double sum = 0.0;
  double sum_sq = 0.0;
  void add(double x) {
    ++n;
    sum += x;
    sum_sq += x * x;
  }
  double mean() const { return n > 0 ? sum / n : std::numeric_limits<double>::quiet_NaN(); }
  double se() const {
    if (n < 2) return std::numeric_limits<double>::quiet_NaN();
    const double m = mean();
    const double var = std::max(0.0, (sum_sq - n * m * m) / (n - 1));
    return std::sqrt(var / n);
  }
};

template <class Cell>
SuperPopTruth bruteforce_impl(const ModelParams<Cell>& m, Rng& rng, long draws) {
  std::array<RunningMean, 6> acc;
  for (long u = 0; u < draws; ++u) {
    const Stratum g = draw_stratum(m.pi, rng);
    const PotentialTable t = draw_table(m, g, rng);
    const double dey0 = t.at(1, Mechanism::a0) - t.at(0, Mechanism::a0);
    const double dey1 = t.at(1, Mechanism::a1) - t.at(0, Mechanism::a1);
    if (is_complier(g, Mechanism::a0)) acc[0].add(dey0);
    if (is_complier(g, Mechanism::a1)) acc[1].add(dey1);
    acc[2].add(dey0);
    acc[3].add(dey1);
    acc[4].add(potential_receipt(g, 1, Mechanism::a0) - potential_receipt(g, 0, Mechanism::a0));
    acc[5].add(potential_receipt(g, 1, Mechanism::a1) - potential_receipt(g, 0, Mechanism::a1));
  }
  SuperPopTruth out;
  for (int k = 0; k < 6; ++k) {
    out.value[k] = acc[k].mean();
    out.se[k] = acc[k].se();
  }
  return out;
}

int truth_slot(const EstimandRequest& r) {
  const auto study = study_estimands();
  const auto it = std::find(study.begin(), study.end(), r);
  if (it == study.end()) {
    throw std::invalid_argument("study: no super-population truth for " + r.name());
  }
  return static_cast<int>(it - study.begin());
}

}  // namespace

Family DgpConfig::family() const {
  return std::holds_alternative<ModelParams<LogNormalCell>>(params) ? Family::lognormal : Family::gamma;
}

DesignConfig DgpConfig::design() const { return DesignConfig::balanced(units, clusters, q0, q1, prob_a0); }

void DgpConfig::validate() const {
  std::visit([](const auto& m) { m.validate(); }, params);
  if (clusters < 2 || units < 2 * clusters) {
    throw std::invalid_argument("dgp: need at least 2 clusters of at least 2 units");
  }
  if (units % clusters != 0) throw std::invalid_argument("dgp: units must be divisible by clusters");
  if (!(prob_a0 > 0.0 && prob_a0 < 1.0)) throw std::invalid_argument("dgp: prob_a0 must lie in (0, 1)");
  design().validate();
}

DgpConfig DgpConfig::lognormal_benchmark(int units, int clusters) {
  DgpConfig cfg;
  cfg.params = lognormal_table();
  cfg.units = units;
  cfg.clusters = clusters;
  return cfg;
}

DgpConfig DgpConfig::gamma_benchmark(int units, int clusters) {
  DgpConfig cfg;
  cfg.params = gamma_table();
  cfg.units = units;
  cfg.clusters = clusters;
  return cfg;
}

SimulatedData generate_dataset(const DgpConfig& cfg, Rng& rng) {
  cfg.validate();
  return generate_dataset(cfg.params, cfg.design(), rng);
}

SimulatedData generate_dataset(const AnyModelParams& params, const DesignConfig& design, Rng& rng) {
  design.validate();
  return std::visit(
      [&](const auto& m) {
        m.validate();
        return generate_impl(m, design, rng);
      },
      params);
}

SuperPopTruth superpop_truth_analytic(const DgpConfig& cfg, TruthFormula formula) {
  const auto* m = std::get_if<ModelParams<LogNormalCell>>(&cfg.params);
  if (m == nullptr) throw std::invalid_argument("analytic truths need the lognormal family; use brute force");
  m->validate();

  auto contrast = [&](Mechanism a, std::span<const Stratum> set) {
    double weight = 0.0;
    for (Stratum g : set) weight += m->prob(g);
    double exact = 0.0;
    double nonzero_hi = 0.0, nonzero_lo = 0.0, pos_hi = 0.0, pos_lo = 0.0;
    for (Stratum g : set) {
      const double w = m->prob(g) / weight;
      const LogNormalCell& hi = m->cell(g, slot_index(1, a));
      const LogNormalCell& lo = m->cell(g, slot_index(0, a));
      exact += w * (mixture_mean(hi) - mixture_mean(lo));
      nonzero_hi += w * (1.0 - hi.p);
      nonzero_lo += w * (1.0 - lo.p);
      pos_hi += w * std::exp(hi.mu + hi.sigma2 / 2.0);
      pos_lo += w * std::exp(lo.mu + lo.sigma2 / 2.0);
    }
    return formula == TruthFormula::exact ? exact : nonzero_hi * pos_hi - nonzero_lo * pos_lo;
  };
  auto compliers = [](Mechanism base) {
    std::vector<Stratum> out;
    for (Stratum g : kAllStrata) {
      if (is_complier(g, base)) out.push_back(g);
    }
    return out;
  };
  auto dey = [&](Mechanism a) {
    double total = 0.0;
    for (Stratum g : kAllStrata) {
      total += m->prob(g) * (mixture_mean(m->cell(g, slot_index(1, a))) - mixture_mean(m->cell(g, slot_index(0, a))));
    }
    return total;
  };
  auto ded = [&](Mechanism a) {
    double total = 0.0;
    for (Stratum g : kAllStrata) total += m->prob(g) * (potential_receipt(g, 1, a) - potential_receipt(g, 0, a));
    return total;
  };

  SuperPopTruth out;
  out.value = {contrast(Mechanism::a0, compliers(Mechanism::a0)),
               contrast(Mechanism::a1, compliers(Mechanism::a1)),
               dey(Mechanism::a0),
               dey(Mechanism::a1),
               ded(Mechanism::a0),
               ded(Mechanism::a1)};
  return out;
}

SuperPopTruth superpop_truth_bruteforce(const DgpConfig& cfg, Rng& rng, long draws) {
  if (draws < 100'000) throw std::invalid_argument("brute-force truths need at least 1e5 draws");
  std::visit([](const auto& m) { m.validate(); }, cfg.params);
  return std::visit([&](const auto& m) { return bruteforce_impl(m, rng, draws); }, cfg.params);
}

void StudyConfig::validate() const {
  dgp.validate();
  priors.validate();
  chain.validate();
  if (replications < 2) throw std::invalid_argument("study: need at least 2 replications");
  if (threads < 0) throw std::invalid_argument("study: threads must be >= 0");
  if (truth_draws < 100'000) throw std::invalid_argument("study: truth_draws must be >= 1e5");
  if (estimands.empty()) throw std::invalid_argument("study: no estimands requested");
  for (const auto& r : estimands) truth_slot(r);
}

StudyError::StudyError(int replication, const std::string& what)
    : std::runtime_error("replication " + std::to_string(replication) + ": " + what), replication_(replication) {}

SuperPopTruth study_truth(const StudyConfig& cfg) {
  if (cfg.dgp.family() == Family::lognormal) return superpop_truth_analytic(cfg.dgp, TruthFormula::exact);
  Rng rng = make_rng(cfg.seed, kTruthStream);
  return superpop_truth_bruteforce(cfg.dgp, rng, cfg.truth_draws);
}

std::vector<SimMetrics> score_study(const StudyConfig& cfg, const SuperPopTruth& truth,
                                    const std::vector<std::vector<NamedSummary>>& replications) {
  std::vector<SimMetrics> out;
  const auto n = static_cast<double>(replications.size());
  for (std::size_t k = 0; k < cfg.estimands.size(); ++k) {
    SimMetrics m;
    m.estimand = cfg.estimands[k].name();
    m.units = cfg.dgp.units;
    m.clusters = cfg.dgp.clusters;
    m.n_sim = static_cast<int>(replications.size());
    m.truth = truth.value[truth_slot(cfg.estimands[k])];
    for (const auto& rep : replications) {
      const EstimandSummary& s = rep.at(k).summary;
      const double err = s.median - m.truth;
      if (s.q025 <= m.truth && m.truth <= s.q975) m.coverage += 1.0;
      m.bias += err;
      m.mse += err * err;
      m.skipped += rep[k].skipped;
    }
    m.coverage /= n;
    m.bias /= n;
    m.mse /= n;
    out.push_back(m);
  }
  return out;
}

StudyResult run_study(const StudyConfig& cfg, const StudyFitter& fitter,
                      const std::function<void(int, int)>& on_progress) {
  cfg.validate();
  StudyFitter fit_one = fitter;
  if (!fit_one) {
    fit_one = [&cfg](const SimulatedData& sim, const std::vector<EstimandRequest>& requests, std::uint64_t seed) {
      FitOptions options;
      options.family = cfg.fit_family;
      options.priors = cfg.priors;
      options.chain = cfg.chain;
      options.chain.seed = seed;
      options.estimands = requests;
      options.design_q = std::array<double, 2>{cfg.dgp.q0, cfg.dgp.q1};
      return fit(sim.data, options).estimands.summaries();
    };
  }

  StudyResult result;
  result.truth = study_truth(cfg);
  result.replications.resize(cfg.replications);

  int workers = cfg.threads > 0 ? cfg.threads : static_cast<int>(std::thread::hardware_concurrency());
  workers = std::clamp(workers, 1, cfg.replications);

  std::atomic<int> next{0};
  std::atomic<bool> failed{false};
  std::mutex mutex;
  int done = 0;
  int error_index = cfg.replications;
  std::string error_message;

  auto work = [&] {
    for (int r = next++; r < cfg.replications && !failed; r = next++) {
      try {
        const std::uint64_t rep_seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(r));
        Rng rng = make_rng(rep_seed, 0);
        const SimulatedData sim = generate_dataset(cfg.dgp, rng);
        auto summaries = fit_one(sim, cfg.estimands, derive_seed(rep_seed, 1));
        if (summaries.size() != cfg.estimands.size()) {
          throw std::logic_error("fitter returned the wrong number of summaries");
        }
        result.replications[r] = std::move(summaries);
        std::lock_guard lock(mutex);
        ++done;
        if (on_progress) on_progress(done, cfg.replications);
      } catch (const std::exception& e) {
        std::lock_guard lock(mutex);
        if (r < error_index) {
          error_index = r;
          error_message = e.what();
        }
        failed = true;
      }
    }
  };

  if (workers == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  if (failed) throw StudyError(error_index, error_message);

  result.metrics = score_study(cfg, result.truth, result.replications);
  return result;
}

}  // namespace twostage
