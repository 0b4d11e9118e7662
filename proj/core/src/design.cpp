#include "twostage/design.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace twostage {

std::string_view to_string(Mechanism a) { return a == Mechanism::a0 ? "a0" : "a1"; }

std::optional<Mechanism> parse_mechanism(std::string_view label) {
  if (label == "a0") return Mechanism::a0;
  if (label == "a1") return Mechanism::a1;
  return std::nullopt;
}

int treated_count(int cluster_size, double q) {
  if (cluster_size < 2 || !(q > 0.0 && q < 1.0)) {
    throw std::invalid_argument("treated_count requires n >= 2 and 0 < q < 1");
  }
  const auto k = static_cast<int>(std::floor(cluster_size * q + 0.5));
  return std::clamp(k, 1, cluster_size - 1);
}

void DesignConfig::validate() const {
  const int j = clusters();
  if (j < 2) throw std::invalid_argument("design: at least 2 clusters required");
  if (high_clusters <= 0 || high_clusters >= j) {
    throw std::invalid_argument("design: J1 must satisfy 0 < J1 < J (got J1=" +
                                std::to_string(high_clusters) + ", J=" + std::to_string(j) + ")");
  }
  if (!(q0 > 0.0 && q0 < 1.0) || !(q1 > 0.0 && q1 < 1.0)) {
    throw std::invalid_argument("design: proportions must lie in (0, 1)");
  }
  if (!(q0 < q1)) throw std::invalid_argument("design: q0 < q1 required (a0 is the low-saturation arm)");
  for (int n : cluster_sizes) {
    if (n < 2) throw std::invalid_argument("design: every cluster needs at least 2 units");
  }
}

DesignConfig DesignConfig::balanced(int units, int clusters, double q0, double q1, double prob_a0) {
  if (clusters < 2 || units % clusters != 0) {
    throw std::invalid_argument("design: units must be divisible by the cluster count");
  }
  DesignConfig cfg;
  cfg.cluster_sizes.assign(clusters, units / clusters);
  cfg.q0 = q0;
  cfg.q1 = q1;
  const auto j1 = static_cast<int>(std::floor(clusters * (1.0 - prob_a0) + 0.5));
  cfg.high_clusters = std::clamp(j1, 1, clusters - 1);
  cfg.validate();
  return cfg;
}

std::vector<Mechanism> sample_first_stage(const DesignConfig& cfg, Rng& rng) {
  cfg.validate();
  std::vector<Mechanism> a(cfg.clusters(), Mechanism::a0);
  std::fill_n(a.begin(), cfg.high_clusters, Mechanism::a1);
  std::shuffle(a.begin(), a.end(), rng);
  return a;
}

std::vector<std::uint8_t> sample_second_stage(const DesignConfig& cfg, Mechanism a, int cluster_size,
                                              Rng& rng) {
  const int k = treated_count(cluster_size, cfg.proportion(a));
  std::vector<std::uint8_t> z(cluster_size, 0);
  std::fill_n(z.begin(), k, 1);
  std::shuffle(z.begin(), z.end(), rng);
  return z;
}

AssignmentRealization sample_assignment(const DesignConfig& cfg, Rng& rng) {
  AssignmentRealization out;
  out.mechanisms = sample_first_stage(cfg, rng);
  out.z.reserve(cfg.clusters());
  for (int j = 0; j < cfg.clusters(); ++j) {
    const Mechanism a = out.mechanisms[j];
    out.z.push_back(sample_second_stage(cfg, a, cfg.cluster_sizes[j], rng));
  }
  return out;
}

}  // namespace twostage
