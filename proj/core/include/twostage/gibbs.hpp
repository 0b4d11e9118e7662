#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "twostage/dataset.hpp"
#include "twostage/outcome_model.hpp"
#include "twostage/rng.hpp"
#include "twostage/strata.hpp"

namespace twostage {

/// Raised when the sampler reaches a state it cannot continue from.
class SamplerFault : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ChainConfig {
  int iterations = 4000;
  int burn_in = 2000;
  int thin = 1;
  std::uint64_t seed = 20220101;
  int chains = 1;
  bool check_invariants = false;  ///< assert joint consistency at every retained draw
  int adapt_interval = 50;        ///< burn-in batch length for Metropolis scale adaptation

  int retained_per_chain() const { return (iterations - burn_in + thin - 1) / thin; }
  void validate() const;
};

/// Four potential outcomes Y(0,a0), Y(1,a0), Y(0,a1), Y(1,a1) with zero indicators.
struct PotentialTable {
  std::array<double, kNumSlots> y{};
  std::array<std::uint8_t, kNumSlots> w{};
  std::uint8_t observed_slot = 0;

  double at(int z, Mechanism a) const { return y[slot_index(z, a)]; }
};

/// Random-walk Metropolis state for the Gamma shape, one scale per cell.
struct ProposalTuning {
  std::array<double, kNumCells> log_step{};
  std::array<int, kNumCells> accepted{};
  std::array<int, kNumCells> proposed{};

  ProposalTuning() { log_step.fill(-2.302585092994046); }  // step 0.1
};

template <class Cell>
struct LatentState {
  std::vector<Stratum> g;
  std::vector<PotentialTable> tables;
  ModelParams<Cell> theta;
  ProposalTuning tuning;
};

/// Sufficient statistics of the observed outcomes routed to one canonical cell.
struct CellStats {
  int zeros = 0;
  int positives = 0;
  double sum_log = 0.0;     ///< over positive outcomes
  double sum_log_sq = 0.0;
  double sum_y = 0.0;
};

/// Routes each unit's OBSERVED outcome to cell_index(G_i, observed slot).
std::array<CellStats, kNumCells> routed_cell_stats(const Dataset& data, std::span<const Stratum> g);

/// Data-driven start: uniform pi; per-cell zero fraction and log-moments from units
/// routable to the cell's arm. With `jitter`, sigma2 (or theta) is scaled by
/// U(0.5, 2) and mu (or log alpha) shifted by N(0, 0.25).
template <class Cell>
LatentState<Cell> initial_state(const Dataset& data, Rng* jitter = nullptr);

/// Step 2: draw each G_i from its compatibility set given theta.
template <class Cell>
void step_sample_strata(LatentState<Cell>& state, const Dataset& data, Rng& rng);

/// Step 3: redraw every missing canonical slot from its cell; collapsed slots mirror.
template <class Cell>
void step_impute_missing(LatentState<Cell>& state, const Dataset& data, Rng& rng);

/// Step 4: conjugate updates of pi and every cell from observed outcomes only.
template <class Cell>
void step_update_params(LatentState<Cell>& state, const Dataset& data, const Priors& priors, Rng& rng);

/// Rescales Metropolis step sizes toward 0.44 acceptance and resets counters.
void adapt_proposals(ProposalTuning& tuning, int batch);

/// Throws SamplerFault if any unit violates compatibility, exclusion restrictions,
/// w/y consistency or the observed-slot constraint.
template <class Cell>
void check_state(const LatentState<Cell>& state, const Dataset& data);

struct DrawInfo {
  int chain = 0;
  int iteration = 0;  ///< 0-based sweep index
  int index = 0;      ///< retained-draw index within the chain
};

template <class Cell>
using DrawVisitor = std::function<void(const DrawInfo&, const LatentState<Cell>&)>;

struct RunControl {
  std::function<void(int chain, int iteration)> on_progress;
  int progress_interval = 0;
  const std::atomic<bool>* stop = nullptr;
};

/// Runs cfg.chains chains in sequence, chain c seeded by derive_seed(cfg.seed, c).
/// The visitor sees every retained draw in (chain, iteration) order.
/// Returns false when stopped early through `control.stop`.
template <class Cell>
bool run_chain(const Dataset& data, const Priors& priors, const ChainConfig& cfg,
               const DrawVisitor<Cell>& visit, const RunControl& control = {});

/// Convenience for small problems: stores every retained state.
template <class Cell>
std::vector<LatentState<Cell>> collect_draws(const Dataset& data, const Priors& priors, const ChainConfig& cfg);

/// Scalar parameter names in flatten() order, e.g. "pi[cc]", "mu[cc,1,a0]".
template <class Cell>
std::vector<std::string> parameter_names();

template <class Cell>
void flatten(const ModelParams<Cell>& theta, std::vector<double>& out);

}  // namespace twostage
