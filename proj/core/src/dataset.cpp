#include "twostage/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_map>
#include <utility>

namespace twostage {

namespace {

std::string with_line(const std::string& what, std::optional<long> line) {
  if (!line) return what;
  return "line " + std::to_string(*line) + ": " + what;
}

}  // namespace

DataError::DataError(const std::string& what, std::optional<long> line)
    : std::runtime_error(with_line(what, line)), line_(line) {}

Dataset Dataset::from_records(std::vector<UnitRecord> records, long first_line) {
  Dataset ds;
  std::unordered_map<std::string, int> index;
  std::set<std::pair<std::string, std::string>> seen;

  auto line_of = [&](std::size_t i) -> std::optional<long> {
    if (first_line <= 0) return std::nullopt;
    return first_line + static_cast<long>(i);
  };

  for (std::size_t i = 0; i < records.size(); ++i) {
    const UnitRecord& r = records[i];
    if (r.z != 0 && r.z != 1) throw DataError("z must be 0 or 1", line_of(i));
    if (r.d != 0 && r.d != 1) throw DataError("d must be 0 or 1", line_of(i));
    if (!(r.y >= 0.0) || !std::isfinite(r.y)) throw DataError("y must be finite and nonnegative", line_of(i));
    if (!seen.emplace(r.cluster, r.unit).second) {
      throw DataError("duplicate unit '" + r.unit + "' in cluster '" + r.cluster + "'", line_of(i));
    }
    auto [it, inserted] = index.emplace(r.cluster, ds.clusters());
    if (inserted) {
      ds.cluster_ids_.push_back(r.cluster);
      ds.cluster_mechanism_.push_back(r.mechanism);
      ds.members_.emplace_back();
      ds.observed_treated_.push_back(0);
    } else if (ds.cluster_mechanism_[it->second] != r.mechanism) {
      throw DataError("cluster '" + r.cluster + "' carries both mechanism labels", line_of(i));
    }
    ds.cluster_of_.push_back(it->second);
    ds.members_[it->second].push_back(static_cast<int>(i));
    ds.observed_treated_[it->second] += r.z;
    ds.log_y_.push_back(r.y > 0.0 ? std::log(r.y) : 0.0);
  }
  ds.records_ = std::move(records);
  return ds;
}

ClusterLayout Dataset::layout(std::optional<std::array<double, 2>> q) const {
  ClusterLayout out;
  out.cluster_of = cluster_of_;
  out.size.resize(clusters());
  out.treated.resize(clusters());

  std::array<double, 2> share{};
  if (q) {
    share = *q;
  } else {
    std::array<double, 2> treated{}, total{};
    for (int j = 0; j < clusters(); ++j) {
      const int a = index_of(cluster_mechanism_[j]);
      treated[a] += observed_treated_[j];
      total[a] += static_cast<double>(members_[j].size());
    }
    for (int a = 0; a < 2; ++a) share[a] = total[a] > 0 ? treated[a] / total[a] : (a == 0 ? 0.4 : 0.8);
  }

  for (int j = 0; j < clusters(); ++j) {
    const int n = static_cast<int>(members_[j].size());
    out.size[j] = n;
    const int own = index_of(cluster_mechanism_[j]);
    out.treated[j][own] = observed_treated_[j];
    const int cf = 1 - own;
    if (n >= 2 && share[cf] > 0.0 && share[cf] < 1.0) {
      out.treated[j][cf] = treated_count(n, share[cf]);
    } else {
      out.treated[j][cf] = static_cast<int>(std::lround(n * share[cf]));
    }
  }
  return out;
}

}  // namespace twostage
