#pragma once

#include <array>
#include <string_view>
#include <optional>

#include "twostage/rng.hpp"
#include "twostage/strata.hpp"

namespace twostage {

enum class Family { lognormal, gamma };

std::string_view to_string(Family f);
std::optional<Family> parse_family(std::string_view label);

/// Zero-inflated log-normal: 0 w.p. p, else exp(N(mu, sigma2)). sigma2 is a variance.
struct LogNormalCell {
  double p = 0.1;
  double mu = 0.0;
  double sigma2 = 1.0;
};

/// Zero-inflated Gamma: 0 w.p. p, else Gamma(shape alpha, scale theta).
struct GammaCell {
  double p = 0.1;
  double alpha = 1.0;
  double theta = 1.0;
};

void validate(const LogNormalCell& cell);
void validate(const GammaCell& cell);

/// Log of the mixed density w.r.t. (point mass at 0) + Lebesgue on (0, inf).
/// Returns -inf for y = 0 when p = 0. Throws std::domain_error for y < 0.
double log_density(double y, const LogNormalCell& cell);
double log_density(double y, const GammaCell& cell);

double sample_outcome(const LogNormalCell& cell, Rng& rng);
double sample_outcome(const GammaCell& cell, Rng& rng);

/// E[Y] = (1 - p) * E[positive part].
double mixture_mean(const LogNormalCell& cell);
double mixture_mean(const GammaCell& cell);

/// Stratum simplex plus the 16 canonical outcome cells.
template <class Cell>
struct ModelParams {
  std::array<double, kNumStrata> pi{};
  std::array<Cell, kNumCells> cells{};

  const Cell& cell(Stratum g, int slot) const { return cells[cell_index(g, slot)]; }
  double prob(Stratum g) const { return pi[index_of(g)]; }

  /// Throws std::invalid_argument if pi is off the simplex or any cell is invalid.
  void validate() const;
};

extern template struct ModelParams<LogNormalCell>;
extern template struct ModelParams<GammaCell>;

/// Conjugate priors. Gamma-family entries are used only by the Gamma sampler.
struct Priors {
  std::array<double, kNumStrata> dirichlet_alpha{1, 1, 1, 1, 1, 1};
  double beta_a = 1.0;
  double beta_b = 1.0;
  double mu_mean = 0.0;
  double mu_var = 100.0;
  double ig_shape = 0.01;
  double ig_scale = 0.01;
  // Gamma family: rate 1/theta ~ Gamma(rate_shape, rate_rate); alpha ~ Gamma(alpha_shape, rate alpha_rate).
  double rate_shape = 0.01;
  double rate_rate = 0.01;
  double alpha_shape = 1.0;
  double alpha_rate = 0.01;

  void validate() const;
};

}  // namespace twostage
