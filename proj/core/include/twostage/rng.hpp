#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace twostage {

/// Seedable 64-bit engine used by every stochastic operation.
using Rng = std::mt19937_64;

/// Counter-based stream split: a seed for stream `stream` of `master`.
/// Distinct (master, stream) pairs give decorrelated engines, so replications
/// and chains can be scheduled on any number of workers without changing output.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream);

Rng make_rng(std::uint64_t master, std::uint64_t stream = 0);

double draw_uniform(Rng& rng);
double draw_normal(Rng& rng, double mean, double sd);
/// Gamma with shape/scale parameterization.
double draw_gamma(Rng& rng, double shape, double scale);
double draw_beta(Rng& rng, double a, double b);
/// X ~ IG(shape, scale) with density proportional to x^{-shape-1} exp(-scale/x).
double draw_inverse_gamma(Rng& rng, double shape, double scale);
void draw_dirichlet(Rng& rng, std::span<const double> alpha, std::span<double> out);

}  // namespace twostage
