#include "twostage/gibbs.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace twostage {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double safe_log(double x) { return x > 0.0 ? std::log(x) : kNegInf; }

// Per-sweep cache of a cell's log density, dropping nothing: the -log y Jacobian is
// included so that weights stay comparable with log_density().
template <class Cell>
struct Kernel;

template <>
struct Kernel<LogNormalCell> {
  double log_p = 0, log_q = 0, mu = 0, half_inv_var = 0, log_norm = 0;

  Kernel() = default;
  explicit Kernel(const LogNormalCell& c)
      : log_p(safe_log(c.p)),
        log_q(safe_log(1.0 - c.p)),
        mu(c.mu),
        half_inv_var(0.5 / c.sigma2),
        log_norm(-0.5 * std::log(2.0 * std::numbers::pi * c.sigma2)) {}

  double operator()(double y, double log_y) const {
    if (y == 0.0) return log_p;
    const double dev = log_y - mu;
    return log_q + log_norm - dev * dev * half_inv_var - log_y;
  }
};

template <>
struct Kernel<GammaCell> {
  double log_p = 0, log_q = 0, shape_m1 = 0, inv_scale = 0, log_norm = 0;

  Kernel() = default;
  explicit Kernel(const GammaCell& c)
      : log_p(safe_log(c.p)),
        log_q(safe_log(1.0 - c.p)),
        shape_m1(c.alpha - 1.0),
        inv_scale(1.0 / c.theta),
        log_norm(-std::lgamma(c.alpha) - c.alpha * std::log(c.theta)) {}

  double operator()(double y, double log_y) const {
    if (y == 0.0) return log_p;
    return log_q + log_norm + shape_m1 * log_y - y * inv_scale;
  }
};

struct LogMoments {
  int count = 0;
  double mean = 0.0;
  double var = 0.0;
};

LogMoments log_moments(const CellStats& s) {
  LogMoments m;
  m.count = s.positives;
  if (s.positives == 0) return m;
  m.mean = s.sum_log / s.positives;
  if (s.positives >= 2) {
    m.var = std::max(0.0, (s.sum_log_sq - s.positives * m.mean * m.mean) / (s.positives - 1));
  }
  return m;
}

// Stats of every unit that could be routed to each cell given only its observed triple.
std::array<CellStats, kNumCells> routable_stats(const Dataset& data, std::array<double, kNumCells>* sum_y_sq) {
  std::array<CellStats, kNumCells> stats{};
  if (sum_y_sq) sum_y_sq->fill(0.0);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const UnitRecord& r = data.record(i);
    const int slot = data.observed_slot(i);
    std::array<bool, kNumCells> touched{};
    for (Stratum g : compatible_strata(r.mechanism, r.z, r.d)) {
      const int c = cell_index(g, slot);
      if (touched[c]) continue;
      touched[c] = true;
      CellStats& s = stats[c];
      if (r.y == 0.0) {
        ++s.zeros;
      } else {
        ++s.positives;
        const double ly = data.log_outcome(i);
        s.sum_log += ly;
        s.sum_log_sq += ly * ly;
        s.sum_y += r.y;
        if (sum_y_sq) (*sum_y_sq)[c] += r.y * r.y;
      }
    }
  }
  return stats;
}

double initial_zero_fraction(const CellStats& s) {
  const int total = s.zeros + s.positives;
  if (total == 0) return 0.1;
  return std::clamp(static_cast<double>(s.zeros) / total, 1e-3, 1.0 - 1e-3);
}

void init_cells(std::array<LogNormalCell, kNumCells>& cells, const Dataset& data, Rng* jitter) {
  const auto stats = routable_stats(data, nullptr);
  for (int c = 0; c < kNumCells; ++c) {
    const LogMoments m = log_moments(stats[c]);
    LogNormalCell& cell = cells[c];
    cell.p = initial_zero_fraction(stats[c]);
    cell.mu = m.count > 0 ? m.mean : 0.0;
    cell.sigma2 = m.count >= 2 && m.var > 1e-8 ? m.var : 1.0;
    if (jitter) {
      cell.sigma2 *= 0.5 + 1.5 * draw_uniform(*jitter);
      cell.mu += draw_normal(*jitter, 0.0, 0.5);
    }
  }
}

void init_cells(std::array<GammaCell, kNumCells>& cells, const Dataset& data, Rng* jitter) {
  std::array<double, kNumCells> sum_sq{};
  const auto stats = routable_stats(data, &sum_sq);
  for (int c = 0; c < kNumCells; ++c) {
    const CellStats& s = stats[c];
    GammaCell& cell = cells[c];
    cell.p = initial_zero_fraction(s);
    cell.alpha = 1.0;
    cell.theta = 1.0;
    if (s.positives >= 2) {
      const double mean = s.sum_y / s.positives;
      const double var = (sum_sq[c] - s.positives * mean * mean) / (s.positives - 1);
      if (var > 0.0 && mean > 0.0) {
        cell.alpha = mean * mean / var;
        cell.theta = var / mean;
      } else if (mean > 0.0) {
        cell.theta = mean;
      }
    } else if (s.positives == 1) {
      cell.theta = s.sum_y;
    }
    if (jitter) {
      cell.theta *= 0.5 + 1.5 * draw_uniform(*jitter);
      cell.alpha *= std::exp(draw_normal(*jitter, 0.0, 0.5));
    }
  }
}

void update_cell(LogNormalCell& cell, const CellStats& s, const Priors& pr, ProposalTuning&, int, Rng& rng) {
  cell.p = draw_beta(rng, pr.beta_a + s.zeros, pr.beta_b + s.positives);
  const double n = s.positives;
  // sigma2 | mu_old, then mu | sigma2.
  const double ss = s.sum_log_sq - 2.0 * cell.mu * s.sum_log + n * cell.mu * cell.mu;
  cell.sigma2 = draw_inverse_gamma(rng, pr.ig_shape + 0.5 * n, pr.ig_scale + 0.5 * std::max(ss, 0.0));
  const double shrink = cell.sigma2 / pr.mu_var;
  const double denom = n + shrink;
  cell.mu = draw_normal(rng, (s.sum_log + pr.mu_mean * shrink) / denom, std::sqrt(cell.sigma2 / denom));
}

double gamma_shape_log_target(double log_alpha, double log_theta, const CellStats& s, const Priors& pr) {
  const double alpha = std::exp(log_alpha);
  const double n = s.positives;
  return n * (-std::lgamma(alpha) - alpha * log_theta) + (alpha - 1.0) * s.sum_log +
         (pr.alpha_shape - 1.0) * log_alpha - pr.alpha_rate * alpha + log_alpha;
}

void update_cell(GammaCell& cell, const CellStats& s, const Priors& pr, ProposalTuning& tuning, int c, Rng& rng) {
  cell.p = draw_beta(rng, pr.beta_a + s.zeros, pr.beta_b + s.positives);

  const double log_theta = std::log(cell.theta);
  const double current = std::log(cell.alpha);
  const double proposal = current + std::exp(tuning.log_step[c]) * draw_normal(rng, 0.0, 1.0);
  const double log_ratio = gamma_shape_log_target(proposal, log_theta, s, pr) -
                           gamma_shape_log_target(current, log_theta, s, pr);
  ++tuning.proposed[c];
  if (std::log(draw_uniform(rng)) < log_ratio) {
    cell.alpha = std::exp(proposal);
    ++tuning.accepted[c];
  }

  const double rate = draw_gamma(rng, pr.rate_shape + s.positives * cell.alpha, 1.0 / (pr.rate_rate + s.sum_y));
  cell.theta = 1.0 / std::max(rate, std::numeric_limits<double>::min());
}

template <class Cell>
void append_cell_names(std::vector<std::string>& names, const std::string& key);

template <>
void append_cell_names<LogNormalCell>(std::vector<std::string>& names, const std::string& key) {
  names.push_back("p[" + key + "]");
  names.push_back("mu[" + key + "]");
  names.push_back("sigma2[" + key + "]");
}

template <>
void append_cell_names<GammaCell>(std::vector<std::string>& names, const std::string& key) {
  names.push_back("p[" + key + "]");
  names.push_back("alpha[" + key + "]");
  names.push_back("theta[" + key + "]");
}

void append_cell(const LogNormalCell& c, std::vector<double>& out) {
  out.push_back(c.p);
  out.push_back(c.mu);
  out.push_back(c.sigma2);
}

void append_cell(const GammaCell& c, std::vector<double>& out) {
  out.push_back(c.p);
  out.push_back(c.alpha);
  out.push_back(c.theta);
}

}  // namespace

void ChainConfig::validate() const {
  if (iterations <= 0) throw std::invalid_argument("chain: iterations must be positive");
  if (burn_in < 0 || burn_in >= iterations) throw std::invalid_argument("chain: 0 <= burn_in < iterations required");
  if (thin <= 0) throw std::invalid_argument("chain: thin must be positive");
  if (chains <= 0) throw std::invalid_argument("chain: chains must be positive");
  if (adapt_interval <= 0) throw std::invalid_argument("chain: adapt_interval must be positive");
}

std::array<CellStats, kNumCells> routed_cell_stats(const Dataset& data, std::span<const Stratum> g) {
  std::array<CellStats, kNumCells> stats{};
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double y = data.record(i).y;
    CellStats& s = stats[cell_index(g[i], data.observed_slot(i))];
    if (y == 0.0) {
      ++s.zeros;
    } else {
      ++s.positives;
      const double ly = data.log_outcome(i);
      s.sum_log += ly;
      s.sum_log_sq += ly * ly;
      s.sum_y += y;
    }
  }
  return stats;
}

template <class Cell>
LatentState<Cell> initial_state(const Dataset& data, Rng* jitter) {
  LatentState<Cell> state;
  state.theta.pi.fill(1.0 / kNumStrata);
  init_cells(state.theta.cells, data, jitter);
  state.g.resize(data.size());
  state.tables.resize(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const UnitRecord& r = data.record(i);
    state.g[i] = compatible_strata(r.mechanism, r.z, r.d).front();
    PotentialTable& t = state.tables[i];
    t.observed_slot = static_cast<std::uint8_t>(data.observed_slot(i));
    t.y.fill(r.y);
    t.w.fill(r.y == 0.0 ? 1 : 0);
  }
  return state;
}

template <class Cell>
void step_sample_strata(LatentState<Cell>& state, const Dataset& data, Rng& rng) {
  std::array<Kernel<Cell>, kNumCells> kernels;
  for (int c = 0; c < kNumCells; ++c) kernels[c] = Kernel<Cell>(state.theta.cells[c]);
  std::array<double, kNumStrata> log_pi{};
  for (int g = 0; g < kNumStrata; ++g) log_pi[g] = safe_log(state.theta.pi[g]);

  std::array<double, kNumStrata> weight{};
  for (std::size_t i = 0; i < data.size(); ++i) {
    const UnitRecord& r = data.record(i);
    const auto options = compatible_strata(r.mechanism, r.z, r.d);
    if (options.size() == 1) {
      state.g[i] = options.front();
      continue;
    }
    const int slot = data.observed_slot(i);
    const double log_y = data.log_outcome(i);
    double top = kNegInf;
    for (std::size_t k = 0; k < options.size(); ++k) {
      const Stratum g = options[k];
      weight[k] = log_pi[index_of(g)] + kernels[cell_index(g, slot)](r.y, log_y);
      top = std::max(top, weight[k]);
    }
    if (top == kNegInf) {
      throw SamplerFault("step_sample_strata: every compatible stratum has zero weight for unit '" + r.unit +
                         "' in cluster '" + r.cluster + "'");
    }
    double total = 0.0;
    for (std::size_t k = 0; k < options.size(); ++k) {
      weight[k] = std::exp(weight[k] - top);
      total += weight[k];
    }
    double u = draw_uniform(rng) * total;
    std::size_t pick = options.size() - 1;
    for (std::size_t k = 0; k < options.size(); ++k) {
      u -= weight[k];
      if (u < 0.0) {
        pick = k;
        break;
      }
    }
    state.g[i] = options[pick];
  }
}

template <class Cell>
void step_impute_missing(LatentState<Cell>& state, const Dataset& data, Rng& rng) {
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Stratum g = state.g[i];
    PotentialTable& t = state.tables[i];
    const int obs = t.observed_slot;
    const int obs_cell = cell_index(g, obs);
    const double y_obs = t.y[obs];

    std::array<int, kNumSlots> drawn_cell{-1, -1, -1, -1};
    std::array<double, kNumSlots> drawn_value{};
    int n_drawn = 0;
    for (int s = 0; s < kNumSlots; ++s) {
      if (s == obs) continue;
      const int c = cell_index(g, s);
      double value = y_obs;
      if (c != obs_cell) {
        int k = 0;
        while (k < n_drawn && drawn_cell[k] != c) ++k;
        if (k == n_drawn) {
          drawn_cell[k] = c;
          drawn_value[k] = sample_outcome(state.theta.cells[c], rng);
          ++n_drawn;
        }
        value = drawn_value[k];
      }
      t.y[s] = value;
      t.w[s] = value == 0.0 ? 1 : 0;
    }
  }
}

template <class Cell>
void step_update_params(LatentState<Cell>& state, const Dataset& data, const Priors& priors, Rng& rng) {
  std::array<double, kNumStrata> alpha = priors.dirichlet_alpha;
  for (Stratum g : state.g) alpha[index_of(g)] += 1.0;
  draw_dirichlet(rng, alpha, state.theta.pi);

  const auto stats = routed_cell_stats(data, state.g);
  for (int c = 0; c < kNumCells; ++c) {
    update_cell(state.theta.cells[c], stats[c], priors, state.tuning, c, rng);
  }
}

void adapt_proposals(ProposalTuning& tuning, int batch) {
  const double delta = std::min(0.5, 1.0 / std::sqrt(static_cast<double>(std::max(batch, 1))));
  for (int c = 0; c < kNumCells; ++c) {
    if (tuning.proposed[c] == 0) continue;
    const double rate = static_cast<double>(tuning.accepted[c]) / tuning.proposed[c];
    tuning.log_step[c] += rate > 0.44 ? delta : -delta;
    tuning.accepted[c] = 0;
    tuning.proposed[c] = 0;
  }
}

template <class Cell>
void check_state(const LatentState<Cell>& state, const Dataset& data) {
  if (state.g.size() != data.size() || state.tables.size() != data.size()) {
    throw SamplerFault("check_state: state size does not match the dataset");
  }
  for (std::size_t i = 0; i < data.size(); ++i) {
    const UnitRecord& r = data.record(i);
    const Stratum g = state.g[i];
    const PotentialTable& t = state.tables[i];
    const std::string who = "unit '" + r.unit + "' in cluster '" + r.cluster + "'";
    const auto options = compatible_strata(r.mechanism, r.z, r.d);
    if (std::find(options.begin(), options.end(), g) == options.end()) {
      throw SamplerFault("check_state: " + who + " has an incompatible stratum");
    }
    if (t.observed_slot != data.observed_slot(i) || t.y[t.observed_slot] != r.y) {
      throw SamplerFault("check_state: " + who + " lost its observed outcome");
    }
    for (int s = 0; s < kNumSlots; ++s) {
      if (!(t.y[s] >= 0.0) || (t.w[s] == 1) != (t.y[s] == 0.0)) {
        throw SamplerFault("check_state: " + who + " has an inconsistent zero indicator");
      }
      for (int u = s + 1; u < kNumSlots; ++u) {
        if (cell_index(g, s) == cell_index(g, u) && t.y[s] != t.y[u]) {
          throw SamplerFault("check_state: " + who + " violates an exclusion restriction");
        }
      }
    }
  }
}

template <class Cell>
bool run_chain(const Dataset& data, const Priors& priors, const ChainConfig& cfg, const DrawVisitor<Cell>& visit,
               const RunControl& control) {
  if (data.empty()) throw std::invalid_argument("run_chain: dataset is empty");
  cfg.validate();
  priors.validate();

  for (int chain = 0; chain < cfg.chains; ++chain) {
    Rng rng = make_rng(cfg.seed, static_cast<std::uint64_t>(chain));
    LatentState<Cell> state = initial_state<Cell>(data, chain > 0 ? &rng : nullptr);
    int retained = 0;
    int batch = 0;
    for (int t = 0; t < cfg.iterations; ++t) {
      if (control.stop && control.stop->load(std::memory_order_relaxed)) return false;
      step_sample_strata(state, data, rng);
      step_impute_missing(state, data, rng);
      step_update_params(state, data, priors, rng);
      if (t < cfg.burn_in && (t + 1) % cfg.adapt_interval == 0) adapt_proposals(state.tuning, ++batch);
      if (t >= cfg.burn_in && (t - cfg.burn_in) % cfg.thin == 0) {
        if (cfg.check_invariants) check_state(state, data);
        visit(DrawInfo{chain, t, retained++}, state);
      }
      if (control.on_progress && control.progress_interval > 0 && (t + 1) % control.progress_interval == 0) {
        control.on_progress(chain, t + 1);
      }
    }
  }
  return true;
}

template <class Cell>
std::vector<LatentState<Cell>> collect_draws(const Dataset& data, const Priors& priors, const ChainConfig& cfg) {
  std::vector<LatentState<Cell>> out;
  run_chain<Cell>(data, priors, cfg, [&](const DrawInfo&, const LatentState<Cell>& s) { out.push_back(s); });
  return out;
}

template <class Cell>
std::vector<std::string> parameter_names() {
  std::vector<std::string> names;
  for (Stratum g : kAllStrata) names.push_back("pi[" + std::string(to_string(g)) + "]");
  for (const CellKey& key : canonical_cells()) append_cell_names<Cell>(names, to_string(key));
  return names;
}

template <class Cell>
void flatten(const ModelParams<Cell>& theta, std::vector<double>& out) {
  out.clear();
  out.insert(out.end(), theta.pi.begin(), theta.pi.end());
  for (const Cell& c : theta.cells) append_cell(c, out);
}

#define TWOSTAGE_INSTANTIATE(Cell)                                                                       \
  template LatentState<Cell> initial_state<Cell>(const Dataset&, Rng*);                                 \
  template void step_sample_strata<Cell>(LatentState<Cell>&, const Dataset&, Rng&);                     \
  template void step_impute_missing<Cell>(LatentState<Cell>&, const Dataset&, Rng&);                    \
  template void step_update_params<Cell>(LatentState<Cell>&, const Dataset&, const Priors&, Rng&);      \
  template void check_state<Cell>(const LatentState<Cell>&, const Dataset&);                            \
  template bool run_chain<Cell>(const Dataset&, const Priors&, const ChainConfig&, const DrawVisitor<Cell>&, \
                                const RunControl&);                                                      \
  template std::vector<LatentState<Cell>> collect_draws<Cell>(const Dataset&, const Priors&,             \
                                                              const ChainConfig&);                       \
  template std::vector<std::string> parameter_names<Cell>();                                             \
  template void flatten<Cell>(const ModelParams<Cell>&, std::vector<double>&);

TWOSTAGE_INSTANTIATE(LogNormalCell)
TWOSTAGE_INSTANTIATE(GammaCell)

#undef TWOSTAGE_INSTANTIATE

}  // namespace twostage
