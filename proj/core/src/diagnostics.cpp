#include "twostage/diagnostics.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace twostage {

template <class Cell>
TraceRecorder<Cell>::TraceRecorder(int chains) {
  traces_.names = parameter_names<Cell>();
  traces_.values.assign(traces_.names.size(), std::vector<std::vector<double>>(chains));
}

template <class Cell>
void TraceRecorder<Cell>::record(const DrawInfo& info, const LatentState<Cell>& state) {
  flatten(state.theta, scratch_);
  for (std::size_t k = 0; k < scratch_.size(); ++k) traces_.values[k].at(info.chain).push_back(scratch_[k]);
}

template class TraceRecorder<LogNormalCell>;
template class TraceRecorder<GammaCell>;

namespace {

double mean_of(std::span<const double> x) {
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double variance_of(std::span<const double> x, double mean) {
  double s = 0.0;
  for (double v : x) s += (v - mean) * (v - mean);
  return s / static_cast<double>(x.size() - 1);
}

}  // namespace

double effective_sample_size(std::span<const double> x) {
  const std::size_t n = x.size();
  if (n < 2) return static_cast<double>(n);
  const double mu = mean_of(x);
  double c0 = 0.0;
  for (double v : x) c0 += (v - mu) * (v - mu);
  c0 /= static_cast<double>(n);
  if (c0 <= 0.0) return static_cast<double>(n);

  auto autocov = [&](std::size_t lag) {
    double s = 0.0;
    for (std::size_t t = 0; t + lag < n; ++t) s += (x[t] - mu) * (x[t + lag] - mu);
    return s / static_cast<double>(n);
  };

  // Sum of consecutive autocorrelation pairs while they stay positive, enforcing
  // a monotone sequence.
  double tau = -1.0;
  double previous_pair = std::numeric_limits<double>::infinity();
  for (std::size_t lag = 0; lag + 1 < n; lag += 2) {
    double pair = (autocov(lag) + autocov(lag + 1)) / c0;
    if (pair <= 0.0) break;
    pair = std::min(pair, previous_pair);
    tau += 2.0 * pair;
    previous_pair = pair;
  }
  tau = std::max(tau, 1.0 / std::log10(static_cast<double>(n) + 1.0));
  return static_cast<double>(n) / tau;
}

double split_rhat(const std::vector<std::vector<double>>& chains) {
  std::vector<std::span<const double>> halves;
  for (const auto& c : chains) {
    const std::size_t half = c.size() / 2;
    if (half < 2) continue;
    halves.emplace_back(c.data(), half);
    halves.emplace_back(c.data() + c.size() - half, half);
  }
  if (halves.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  std::size_t len = halves.front().size();
  for (const auto& h : halves) len = std::min(len, h.size());

  std::vector<double> means;
  double within = 0.0;
  for (auto h : halves) {
    h = h.first(len);
    const double m = mean_of(h);
    means.push_back(m);
    within += variance_of(h, m);
  }
  within /= static_cast<double>(halves.size());
  const double grand = mean_of(means);
  double between = 0.0;
  for (double m : means) between += (m - grand) * (m - grand);
  between *= static_cast<double>(len) / static_cast<double>(halves.size() - 1);
  if (within <= 0.0) return between <= 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
  const double var_plus = (static_cast<double>(len - 1) / len) * within + between / static_cast<double>(len);
  return std::sqrt(var_plus / within);
}

std::vector<ParameterSummary> diagnostics(const TraceSet& traces) {
  std::vector<ParameterSummary> out;
  out.reserve(traces.parameters());
  for (std::size_t k = 0; k < traces.parameters(); ++k) {
    const auto& chains = traces.values[k];
    std::vector<double> pooled;
    double ess = 0.0;
    for (const auto& c : chains) {
      pooled.insert(pooled.end(), c.begin(), c.end());
      ess += effective_sample_size(c);
    }
    if (pooled.size() < 2) throw std::invalid_argument("diagnostics: need at least 2 retained draws");
    ParameterSummary s;
    s.name = traces.names[k];
    s.mean = mean_of(pooled);
    s.sd = std::sqrt(variance_of(pooled, s.mean));
    s.ess = ess;
    s.mcse = s.sd / std::sqrt(std::max(ess, 1.0));
    s.rhat = chains.size() >= 2 ? split_rhat(chains) : std::numeric_limits<double>::quiet_NaN();
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace twostage
