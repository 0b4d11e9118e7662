#pragma once

#include <span>
#include <string>
#include <vector>

#include "twostage/gibbs.hpp"

namespace twostage {

struct ParameterSummary {
  std::string name;
  double mean = 0.0;
  double sd = 0.0;
  double mcse = 0.0;
  double ess = 0.0;
  double rhat = 0.0;  ///< split-R-hat; NaN with a single chain
};

/// Retained scalar traces laid out as values[param][chain][draw].
struct TraceSet {
  std::vector<std::string> names;
  std::vector<std::vector<std::vector<double>>> values;

  std::size_t parameters() const { return names.size(); }
};

/// Records flattened theta at every retained draw, one series per chain.
template <class Cell>
class TraceRecorder {
 public:
  explicit TraceRecorder(int chains);

  void record(const DrawInfo& info, const LatentState<Cell>& state);
  const TraceSet& traces() const { return traces_; }

 private:
  TraceSet traces_;
  std::vector<double> scratch_;
};

extern template class TraceRecorder<LogNormalCell>;
extern template class TraceRecorder<GammaCell>;

/// Effective sample size of one series (Geyer initial positive sequence).
double effective_sample_size(std::span<const double> series);

/// Split-R-hat over all chains of one parameter (each chain halved).
double split_rhat(const std::vector<std::vector<double>>& chains);

/// Requires >= 2 retained draws per parameter. ESS sums over chains.
std::vector<ParameterSummary> diagnostics(const TraceSet& traces);

}  // namespace twostage
