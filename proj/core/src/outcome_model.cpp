#include "twostage/outcome_model.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

namespace twostage {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check_probability(double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("cell: p must lie in [0, 1]");
}

double log_or_neg_inf(double x) { return x > 0.0 ? std::log(x) : kNegInf; }

}  // namespace

std::string_view to_string(Family f) { return f == Family::lognormal ? "lognormal" : "gamma"; }

std::optional<Family> parse_family(std::string_view label) {
  if (label == "lognormal") return Family::lognormal;
  if (label == "gamma") return Family::gamma;
  return std::nullopt;
}

void validate(const LogNormalCell& cell) {
  check_probability(cell.p);
  if (!std::isfinite(cell.mu)) throw std::invalid_argument("cell: mu must be finite");
  if (!(cell.sigma2 > 0.0) || !std::isfinite(cell.sigma2)) {
    throw std::invalid_argument("cell: sigma2 must be positive");
  }
}

void validate(const GammaCell& cell) {
  check_probability(cell.p);
  if (!(cell.alpha > 0.0) || !(cell.theta > 0.0) || !std::isfinite(cell.alpha) ||
      !std::isfinite(cell.theta)) {
    throw std::invalid_argument("cell: alpha and theta must be positive");
  }
}

double log_density(double y, const LogNormalCell& cell) {
  if (y < 0.0 || std::isnan(y)) throw std::domain_error("log_density: outcome must be nonnegative");
  if (y == 0.0) return log_or_neg_inf(cell.p);
  const double log_y = std::log(y);
  const double dev = log_y - cell.mu;
  return log_or_neg_inf(1.0 - cell.p) - 0.5 * std::log(2.0 * std::numbers::pi * cell.sigma2) -
         dev * dev / (2.0 * cell.sigma2) - log_y;
}

double log_density(double y, const GammaCell& cell) {
  if (y < 0.0 || std::isnan(y)) throw std::domain_error("log_density: outcome must be nonnegative");
  if (y == 0.0) return log_or_neg_inf(cell.p);
  return log_or_neg_inf(1.0 - cell.p) - std::lgamma(cell.alpha) - cell.alpha * std::log(cell.theta) +
         (cell.alpha - 1.0) * std::log(y) - y / cell.theta;
}

double sample_outcome(const LogNormalCell& cell, Rng& rng) {
  if (draw_uniform(rng) < cell.p) return 0.0;
  return std::exp(draw_normal(rng, cell.mu, std::sqrt(cell.sigma2)));
}

double sample_outcome(const GammaCell& cell, Rng& rng) {
  if (draw_uniform(rng) < cell.p) return 0.0;
  return draw_gamma(rng, cell.alpha, cell.theta);
}

double mixture_mean(const LogNormalCell& cell) {
  return (1.0 - cell.p) * std::exp(cell.mu + 0.5 * cell.sigma2);
}

double mixture_mean(const GammaCell& cell) { return (1.0 - cell.p) * cell.alpha * cell.theta; }

template <class Cell>
void ModelParams<Cell>::validate() const {
  double total = 0.0;
  for (double v : pi) {
    if (!(v >= 0.0)) throw std::invalid_argument("params: pi entries must be nonnegative");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw std::invalid_argument("params: pi must sum to 1 (got " + std::to_string(total) + ")");
  }
  for (const Cell& c : cells) twostage::validate(c);
}

template struct ModelParams<LogNormalCell>;
template struct ModelParams<GammaCell>;

void Priors::validate() const {
  for (double a : dirichlet_alpha) {
    if (!(a > 0.0)) throw std::invalid_argument("priors: Dirichlet concentrations must be positive");
  }
  const double positives[] = {beta_a,  beta_b,     mu_var,    ig_shape,    ig_scale,
                              rate_shape, rate_rate, alpha_shape, alpha_rate};
  for (double v : positives) {
    if (!(v > 0.0)) throw std::invalid_argument("priors: hyperparameters must be strictly positive");
  }
  if (!std::isfinite(mu_mean)) throw std::invalid_argument("priors: mu_mean must be finite");
}

}  // namespace twostage
