#include <doctest.h>

#include <cmath>
#include <numbers>

#include <boost/math/distributions/gamma.hpp>
#include <boost/math/distributions/lognormal.hpp>
#include <boost/math/quadrature/exp_sinh.hpp>

#include "stats.hpp"
#include "twostage/outcome_model.hpp"

using namespace twostage;

namespace {

const double kLogInvSqrt2Pi = -0.5 * std::log(2.0 * std::numbers::pi);

template <class Cell>
double total_mass(const Cell& cell) {
  boost::math::quadrature::exp_sinh<double> integrator;
  const double positive = integrator.integrate([&](double y) { return std::exp(log_density(y, cell)); });
  return std::exp(log_density(0.0, cell)) + positive;
}

}  // namespace

TEST_CASE("lognormal log density values") {
  CHECK(log_density(0.0, LogNormalCell{0.5, 3.0, 2.0}) == doctest::Approx(std::log(0.5)));
  CHECK(log_density(1.0, LogNormalCell{0.0, 0.0, 1.0}) == doctest::Approx(kLogInvSqrt2Pi));
  CHECK(log_density(std::exp(1.0), LogNormalCell{0.1, 1.0, 1.0}) ==
        doctest::Approx(std::log(0.9) + kLogInvSqrt2Pi - 1.0));
  CHECK(log_density(0.0, LogNormalCell{0.0, 0.0, 1.0}) == -INFINITY);
  CHECK(log_density(5.0, LogNormalCell{1.0, 0.0, 1.0}) == -INFINITY);
  CHECK_THROWS_AS(log_density(-1.0, LogNormalCell{}), std::domain_error);
}

TEST_CASE("lognormal density matches an independent implementation") {
  const LogNormalCell cell{0.3, 7.5, 2.5};
  const boost::math::lognormal_distribution<double> ref(7.5, std::sqrt(2.5));
  for (double y : {1e-3, 1.0, 50.0, 1808.0, 1e5, 5e6}) {
    CHECK(log_density(y, cell) == doctest::Approx(std::log(0.7 * boost::math::pdf(ref, y))).epsilon(1e-10));
  }
}

TEST_CASE("gamma density matches an independent implementation") {
  const GammaCell cell{0.2, 2.5, 1800.0};
  const boost::math::gamma_distribution<double> ref(2.5, 1800.0);
  for (double y : {1e-2, 1.0, 50.0, 1808.0, 1e5}) {
    CHECK(log_density(y, cell) == doctest::Approx(std::log(0.8 * boost::math::pdf(ref, y))).epsilon(1e-10));
  }
  CHECK(log_density(0.0, cell) == doctest::Approx(std::log(0.2)));
  CHECK_THROWS_AS(log_density(-2.0, cell), std::domain_error);
}

TEST_CASE("densities integrate to one over the mixed measure") {
  for (double p : {0.0, 0.1, 0.7}) {
    for (double mu : {0.0, 5.0, 8.0}) {
      for (double s2 : {0.25, 1.5, 3.0}) {
        CHECK(total_mass(LogNormalCell{p, mu, s2}) == doctest::Approx(1.0).epsilon(1e-6));
      }
    }
    for (double alpha : {0.7, 2.0, 9.0}) {
      for (double theta : {1.0, 300.0}) {
        CHECK(total_mass(GammaCell{p, alpha, theta}) == doctest::Approx(1.0).epsilon(1e-6));
      }
    }
  }
}

TEST_CASE("degenerate samplers") {
  Rng rng = make_rng(5);
  for (int k = 0; k < 1000; ++k) {
    REQUIRE(sample_outcome(LogNormalCell{1.0, 5.0, 1.0}, rng) == 0.0);
    REQUIRE(sample_outcome(GammaCell{1.0, 2.0, 3.0}, rng) == 0.0);
  }
  for (int k = 0; k < 1000; ++k) {
    REQUIRE(sample_outcome(LogNormalCell{0.0, 0.0, 1e-12}, rng) == doctest::Approx(1.0).epsilon(1e-4));
  }
}

TEST_CASE("lognormal sampler: zero fraction and log mean over 1e6 draws") {
  const LogNormalCell cell{0.1, 5.0, 1.5};
  Rng rng = make_rng(6);
  const int n = 1000000;
  long zeros = 0;
  double sum_log = 0.0, sum = 0.0, sum_sq = 0.0;
  for (int k = 0; k < n; ++k) {
    const double y = sample_outcome(cell, rng);
    sum += y;
    sum_sq += y * y;
    if (y == 0.0) {
      ++zeros;
    } else {
      sum_log += std::log(y);
    }
  }
  CHECK(std::abs(zeros / double(n) - 0.1) < 3.0 * std::sqrt(0.09 / n));
  const double positives = n - zeros;
  CHECK(std::abs(sum_log / positives - 5.0) < 3.0 * std::sqrt(1.5 / positives));

  const double mean = sum / n;
  const double se = std::sqrt((sum_sq / n - mean * mean) / n);
  CHECK(mixture_mean(cell) == doctest::Approx(0.9 * std::exp(5.75)));
  CHECK(std::abs(mean - mixture_mean(cell)) < 3.0 * se);
}

TEST_CASE("gamma sampler mean") {
  const GammaCell cell{0.25, 1.6, 900.0};
  Rng rng = make_rng(7);
  const int n = 400000;
  double sum = 0.0, sum_sq = 0.0;
  for (int k = 0; k < n; ++k) {
    const double y = sample_outcome(cell, rng);
    sum += y;
    sum_sq += y * y;
  }
  const double mean = sum / n;
  CHECK(mixture_mean(cell) == doctest::Approx(0.75 * 1.6 * 900.0));
  CHECK(std::abs(mean - mixture_mean(cell)) < 3.0 * std::sqrt((sum_sq / n - mean * mean) / n));
}

TEST_CASE("positive parts pass KS against the density") {
  Rng rng = make_rng(8);
  SUBCASE("lognormal") {
    const LogNormalCell cell{0.2, 7.0, 2.0};
    std::vector<double> pos;
    while (pos.size() < 100000) {
      const double y = sample_outcome(cell, rng);
      if (y > 0.0) pos.push_back(y);
    }
    const boost::math::lognormal_distribution<double> ref(7.0, std::sqrt(2.0));
    CHECK(testing::ks_test(pos, [&](double y) { return boost::math::cdf(ref, y); }).p > 0.01);
  }
  SUBCASE("gamma") {
    const GammaCell cell{0.2, 0.8, 2000.0};
    std::vector<double> pos;
    while (pos.size() < 100000) {
      const double y = sample_outcome(cell, rng);
      if (y > 0.0) pos.push_back(y);
    }
    const boost::math::gamma_distribution<double> ref(0.8, 2000.0);
    CHECK(testing::ks_test(pos, [&](double y) { return boost::math::cdf(ref, y); }).p > 0.01);
  }
}

TEST_CASE("mixture means at the boundaries") {
  CHECK(mixture_mean(LogNormalCell{1.0, 9.0, 2.0}) == 0.0);
  CHECK(mixture_mean(LogNormalCell{0.0, 0.0, 0.0}) == 1.0);
  CHECK(mixture_mean(GammaCell{0.0, 2.0, 3.0}) == doctest::Approx(6.0));
}

TEST_CASE("validation") {
  CHECK_THROWS_AS(validate(LogNormalCell{1.5, 0.0, 1.0}), std::invalid_argument);
  CHECK_THROWS_AS(validate(LogNormalCell{0.1, 0.0, 0.0}), std::invalid_argument);
  CHECK_THROWS_AS(validate(LogNormalCell{0.1, NAN, 1.0}), std::invalid_argument);
  CHECK_THROWS_AS(validate(GammaCell{0.1, 0.0, 1.0}), std::invalid_argument);
  CHECK_THROWS_AS(validate(GammaCell{0.1, 1.0, -1.0}), std::invalid_argument);
  CHECK_NOTHROW(validate(LogNormalCell{0.0, -3.0, 0.1}));

  ModelParams<LogNormalCell> m;
  m.pi = {0.5, 0.1, 0.1, 0.1, 0.1, 0.1};
  CHECK_NOTHROW(m.validate());
  m.pi[0] = 0.6;
  CHECK_THROWS_AS(m.validate(), std::invalid_argument);
  m.pi = {1.1, -0.1, 0, 0, 0, 0};
  CHECK_THROWS_AS(m.validate(), std::invalid_argument);

  Priors pr;
  CHECK_NOTHROW(pr.validate());
  pr.mu_var = 0.0;
  CHECK_THROWS_AS(pr.validate(), std::invalid_argument);
  pr = Priors{};
  pr.dirichlet_alpha[3] = -1.0;
  CHECK_THROWS_AS(pr.validate(), std::invalid_argument);
}

TEST_CASE("family labels") {
  CHECK(parse_family("lognormal") == Family::lognormal);
  CHECK(parse_family("gamma") == Family::gamma);
  CHECK_FALSE(parse_family("normal").has_value());
  CHECK(to_string(Family::gamma) == "gamma");
}
