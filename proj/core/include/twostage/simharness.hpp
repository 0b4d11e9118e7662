#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <variant>
#include <vector>

#include "twostage/dataset.hpp"
#include "twostage/design.hpp"
#include "twostage/estimands.hpp"
#include "twostage/gibbs.hpp"
#include "twostage/outcome_model.hpp"

namespace twostage {

using AnyModelParams = std::variant<ModelParams<LogNormalCell>, ModelParams<GammaCell>>;

/// Data-generating process: stratum simplex, 16 outcome cells and an equal-size design.
struct DgpConfig {
  AnyModelParams params = ModelParams<LogNormalCell>{};
  int units = 5000;
  int clusters = 100;
  double q0 = 0.4;
  double q1 = 0.8;
  double prob_a0 = 0.5;

  Family family() const;
  DesignConfig design() const;
  /// Throws std::invalid_argument for an invalid simplex or cell, or N not divisible by J.
  void validate() const;

  /// Zero-inflated log-normal benchmark parameters.
  static DgpConfig lognormal_benchmark(int units = 5000, int clusters = 100);
  /// Zero-inflated Gamma parameters used for the misspecification study.
  static DgpConfig gamma_benchmark(int units = 5000, int clusters = 100);
};

struct SimulatedData {
  Dataset data;
  std::vector<Stratum> g;
  std::vector<PotentialTable> tables;
  ClusterLayout layout;  ///< design K_j(a)
};

/// Draws G ~ pi, full potential tables honoring exclusion restrictions, then (A, Z)
/// from the design; D and Y are read off the truth.
SimulatedData generate_dataset(const DgpConfig& cfg, Rng& rng);

/// Same process on an arbitrary design, e.g. unequal cluster sizes.
SimulatedData generate_dataset(const AnyModelParams& params, const DesignConfig& design, Rng& rng);

/// Super-population truths for study_estimands(), in that order:
/// CADE(0;a0), CADE(1;a1), DEY(a0), DEY(a1), DED(a0), DED(a1).
struct SuperPopTruth {
  std::array<double, 6> value{};
  std::array<double, 6> se{};  ///< zero for analytic truths
};

/// `factorized` multiplies the complier-weighted non-zero probability by the
/// complier-weighted positive-part mean; `exact` takes the mixture expectation.
/// The two agree whenever p or the positive mean is constant over the complier set.
enum class TruthFormula { factorized, exact };

/// Lognormal family only; throws std::invalid_argument otherwise.
SuperPopTruth superpop_truth_analytic(const DgpConfig& cfg, TruthFormula formula = TruthFormula::factorized);

/// Monte-Carlo truths over `draws` simulated units (>= 1e5) with standard errors.
SuperPopTruth superpop_truth_bruteforce(const DgpConfig& cfg, Rng& rng, long draws);

struct SimMetrics {
  std::string estimand;
  int units = 0;
  int clusters = 0;
  int n_sim = 0;
  double truth = 0.0;
  double coverage = 0.0;
  double bias = 0.0;
  double mse = 0.0;
  long skipped = 0;  ///< total draws without compliers, over all replications
};

/// Produces one summary per requested estimand, in request order.
using StudyFitter = std::function<std::vector<NamedSummary>(
    const SimulatedData& sim, const std::vector<EstimandRequest>& requests, std::uint64_t seed)>;

struct StudyConfig {
  DgpConfig dgp;
  Family fit_family = Family::lognormal;  ///< differs from dgp.family() in misspecification mode
  Priors priors;
  ChainConfig chain;
  int replications = 100;
  std::uint64_t seed = 1;
  int threads = 0;  ///< 0 = hardware concurrency
  std::vector<EstimandRequest> estimands = study_estimands();
  long truth_draws = 1'000'000;  ///< brute-force size when no analytic truth exists

  void validate() const;
};

/// Replication-level error carrying the failing index.
class StudyError : public std::runtime_error {
 public:
  StudyError(int replication, const std::string& what);
  int replication() const { return replication_; }

 private:
  int replication_;
};

struct StudyResult {
  SuperPopTruth truth;
  std::vector<SimMetrics> metrics;                       ///< per requested estimand
  std::vector<std::vector<NamedSummary>> replications;   ///< per replication, per estimand
};

/// Truths the study scores against: exact analytic for lognormal, brute force otherwise.
SuperPopTruth study_truth(const StudyConfig& cfg);

/// Replication r uses derive_seed(cfg.seed, r), so results do not depend on `threads`.
/// An empty fitter runs the Gibbs sampler with cfg.fit_family.
StudyResult run_study(const StudyConfig& cfg, const StudyFitter& fitter = {},
                      const std::function<void(int done, int total)>& on_progress = {});

/// Scores already-fitted replications against truths.
std::vector<SimMetrics> score_study(const StudyConfig& cfg, const SuperPopTruth& truth,
                                    const std::vector<std::vector<NamedSummary>>& replications);

}  // namespace twostage
