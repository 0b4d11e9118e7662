#include "twostage/rng.hpp"

#include <algorithm>
#include <cassert>
#include <limits>

namespace twostage {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  return splitmix64(splitmix64(master) ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

Rng make_rng(std::uint64_t master, std::uint64_t stream) {
  return Rng(derive_seed(master, stream));
}

double draw_uniform(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

double draw_normal(Rng& rng, double mean, double sd) {
  return std::normal_distribution<double>(mean, sd)(rng);
}

double draw_gamma(Rng& rng, double shape, double scale) {
  return std::gamma_distribution<double>(shape, scale)(rng);
}

double draw_beta(Rng& rng, double a, double b) {
  const double x = draw_gamma(rng, a, 1.0);
  const double y = draw_gamma(rng, b, 1.0);
  const double s = x + y;
  // Both shapes tiny can underflow the pair; fall back to a fair coin.
  if (s <= 0.0) return draw_uniform(rng) < a / (a + b) ? 1.0 : 0.0;
  return x / s;
}

double draw_inverse_gamma(Rng& rng, double shape, double scale) {
  // Shapes near the IG(0.01, 0.01) prior underflow the gamma draw to zero.
  const double g = std::max(draw_gamma(rng, shape, 1.0), std::numeric_limits<double>::min());
  return scale / g;
}

void draw_dirichlet(Rng& rng, std::span<const double> alpha, std::span<double> out) {
  assert(alpha.size() == out.size());
  double total = 0.0;
  for (std::size_t k = 0; k < alpha.size(); ++k) {
    out[k] = draw_gamma(rng, alpha[k], 1.0);
    total += out[k];
  }
  for (double& v : out) v /= total;
}

}  // namespace twostage
