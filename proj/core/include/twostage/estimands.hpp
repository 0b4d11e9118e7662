#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "twostage/dataset.hpp"
#include "twostage/gibbs.hpp"
#include "twostage/strata.hpp"

namespace twostage {

enum class EstimandKind { DED, DEY, SED, SEY, OEY, CADE, CASE, CAOE };

/// One causal estimand. `target` is a mechanism index for DED/DEY/CADE and an
/// assignment z for SED/SEY/CASE; OEY/CAOE ignore it. `base` is the mechanism a*
/// at which compliers are defined and is present iff the kind is a complier kind.
struct EstimandRequest {
  EstimandKind kind = EstimandKind::DEY;
  int target = 0;
  std::optional<Mechanism> base;

  /// Stable key, e.g. "DEY(a0)", "SEY(1)", "OEY(a0,a1)", "CADE(a1;a0)", "CASE(0;a1)", "CAOE(a0,a1;a0)".
  std::string name() const;
  void validate() const;
  static EstimandRequest parse(std::string_view name);

  bool operator==(const EstimandRequest&) const = default;
};

bool is_complier_kind(EstimandKind kind);

/// The 19 estimands reported for a fit: 10 ITT/complier contrasts plus OEY, both
/// CAOEs, the cross-base CADEs and all four CASEs.
std::vector<EstimandRequest> all_estimands();

/// The six quantities scored by the simulation study.
std::vector<EstimandRequest> study_estimands();

struct DirectEffects {
  std::array<double, 2> dey{};  ///< by mechanism
  std::array<double, 2> ded{};
};

struct SpilloverEffects {
  std::array<double, 2> sey{};  ///< by z
  std::array<double, 2> sed{};
};

DirectEffects direct_effects(std::span<const PotentialTable> tables, std::span<const Stratum> g,
                             const ClusterLayout& layout);
SpilloverEffects spillover_effects(std::span<const PotentialTable> tables, std::span<const Stratum> g,
                                   const ClusterLayout& layout);
double overall_effect(std::span<const PotentialTable> tables, const ClusterLayout& layout);

/// Flat average over compliers at the request's base; nullopt when there are none.
std::optional<double> complier_effect(std::span<const PotentialTable> tables, std::span<const Stratum> g,
                                      const ClusterLayout& layout, const EstimandRequest& request);

/// Unit-level OEY via the decomposition K(a1)/n DEY(a1) - K(a0)/n DEY(a0) + SEY(0).
double unit_overall_effect(const PotentialTable& t, double share_a0, double share_a1);

/// Evaluates many estimands in one pass over the units.
class EstimandEvaluator {
 public:
  EstimandEvaluator(ClusterLayout layout, std::vector<EstimandRequest> requests);

  const std::vector<EstimandRequest>& requests() const { return requests_; }
  const ClusterLayout& layout() const { return layout_; }

  void evaluate(std::span<const PotentialTable> tables, std::span<const Stratum> g,
                std::vector<std::optional<double>>& out) const;

 private:
  ClusterLayout layout_;
  std::vector<EstimandRequest> requests_;
};

struct EstimandSummary {
  double mean = 0.0;
  double median = 0.0;
  double q025 = 0.0;
  double q975 = 0.0;
  int n_draws = 0;
};

/// Type-7 (linear interpolation) quantile of sorted values.
double quantile_sorted(std::span<const double> sorted, double prob);

/// Requires at least 2 finite values; non-finite values are ignored.
EstimandSummary summarize(std::span<const double> values);

struct NamedSummary {
  std::string name;
  EstimandSummary summary;
  int skipped = 0;    ///< draws with an empty complier set
  int nonfinite = 0;  ///< draws that overflowed (excluded from the summary)
};

/// Streams per-draw estimand values; memory is O(requests x retained draws).
class EstimandAccumulator {
 public:
  explicit EstimandAccumulator(std::vector<EstimandRequest> requests);

  void add(const std::vector<std::optional<double>>& values);
  void merge(const EstimandAccumulator& other);

  const std::vector<EstimandRequest>& requests() const { return requests_; }
  std::span<const double> draws(std::size_t k) const { return values_[k]; }
  int skipped(std::size_t k) const { return skipped_[k]; }

  /// Estimands with fewer than 2 finite draws get NaN summary fields.
  std::vector<NamedSummary> summaries() const;

 private:
  std::vector<EstimandRequest> requests_;
  std::vector<std::vector<double>> values_;
  std::vector<int> skipped_;
};

}  // namespace twostage
