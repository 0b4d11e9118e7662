#pragma once

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "twostage/rng.hpp"

namespace twostage {

/// Cluster-level assignment mechanism. a0 is the low-saturation arm, a1 the high one.
enum class Mechanism : std::uint8_t { a0 = 0, a1 = 1 };

inline constexpr int index_of(Mechanism a) { return static_cast<int>(a); }
inline constexpr Mechanism other(Mechanism a) { return a == Mechanism::a0 ? Mechanism::a1 : Mechanism::a0; }

std::string_view to_string(Mechanism a);
std::optional<Mechanism> parse_mechanism(std::string_view label);

/// Two-stage completely randomized design.
struct DesignConfig {
  std::vector<int> cluster_sizes;
  int high_clusters = 0;  ///< J1: clusters assigned a1
  double q0 = 0.4;
  double q1 = 0.8;

  int clusters() const { return static_cast<int>(cluster_sizes.size()); }
  double proportion(Mechanism a) const { return a == Mechanism::a0 ? q0 : q1; }

  /// Throws std::invalid_argument naming the violated constraint.
  void validate() const;

  /// Equal-size clusters, J1 = J/2 rounded half up and clamped to [1, J-1].
  static DesignConfig balanced(int units, int clusters, double q0, double q1, double prob_a0 = 0.5);
};

/// K = round-half-up(n * q) clamped to [1, n - 1]. Requires n >= 2 and 0 < q < 1.
int treated_count(int cluster_size, double q);

/// Uniformly random size-J1 subset of clusters gets a1, the rest a0.
std::vector<Mechanism> sample_first_stage(const DesignConfig& cfg, Rng& rng);

/// Exactly K_j(a) ones placed uniformly at random among the cluster's n slots.
std::vector<std::uint8_t> sample_second_stage(const DesignConfig& cfg, Mechanism a, int cluster_size,
                                              Rng& rng);

struct AssignmentRealization {
  std::vector<Mechanism> mechanisms;            ///< per cluster
  std::vector<std::vector<std::uint8_t>> z;     ///< per cluster, per unit
};

AssignmentRealization sample_assignment(const DesignConfig& cfg, Rng& rng);

}  // namespace twostage
