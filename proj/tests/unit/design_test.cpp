#include <doctest.h>

#include <algorithm>
#include <map>
#include <numeric>

#include "stats.hpp"
#include "twostage/design.hpp"

using namespace twostage;

namespace {

DesignConfig four_clusters(int high) {
  DesignConfig cfg;
  cfg.cluster_sizes = {10, 10, 10, 10};
  cfg.high_clusters = high;
  return cfg;
}

}  // namespace

TEST_CASE("treated_count rounds half up and clamps") {
  CHECK(treated_count(100, 0.4) == 40);
  CHECK(treated_count(100, 0.8) == 80);
  CHECK(treated_count(23, 0.4) == 9);
  CHECK(treated_count(4, 0.625) == 3);  // 2.5 rounds up
  CHECK(treated_count(5, 0.99) == 4);
  CHECK(treated_count(5, 0.01) == 1);
  CHECK(treated_count(2, 0.5) == 1);
  CHECK_THROWS_AS(treated_count(1, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(treated_count(10, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(treated_count(10, 1.0), std::invalid_argument);
}

TEST_CASE("treated_count is monotone in q") {
  for (int n : {2, 3, 7, 23, 50, 101}) {
    int prev = 0;
    for (int k = 1; k < 200; ++k) {
      const int cur = treated_count(n, k / 200.0);
      CHECK(cur >= prev);
      CHECK(cur >= 1);
      CHECK(cur <= n - 1);
      prev = cur;
    }
  }
}

TEST_CASE("design validation") {
  CHECK_NOTHROW(four_clusters(2).validate());
  CHECK_THROWS_AS(four_clusters(4).validate(), std::invalid_argument);
  CHECK_THROWS_AS(four_clusters(0).validate(), std::invalid_argument);

  DesignConfig one = four_clusters(1);
  one.cluster_sizes = {10};
  CHECK_THROWS_AS(one.validate(), std::invalid_argument);

  DesignConfig tiny = four_clusters(2);
  tiny.cluster_sizes[3] = 1;
  CHECK_THROWS_AS(tiny.validate(), std::invalid_argument);

  DesignConfig swapped = four_clusters(2);
  swapped.q0 = 0.8;
  swapped.q1 = 0.4;
  CHECK_THROWS_AS(swapped.validate(), std::invalid_argument);

  DesignConfig equal = four_clusters(2);
  equal.q1 = equal.q0;
  CHECK_THROWS_AS(equal.validate(), std::invalid_argument);
}

TEST_CASE("balanced design") {
  const DesignConfig cfg = DesignConfig::balanced(5000, 100, 0.4, 0.8);
  CHECK(cfg.clusters() == 100);
  CHECK(cfg.high_clusters == 50);
  CHECK(std::all_of(cfg.cluster_sizes.begin(), cfg.cluster_sizes.end(), [](int n) { return n == 50; }));
  CHECK(DesignConfig::balanced(30, 3, 0.4, 0.8).high_clusters == 2);  // 1.5 rounds up
  CHECK(DesignConfig::balanced(20, 2, 0.4, 0.8, 0.99).high_clusters == 1);
  CHECK_THROWS_AS(DesignConfig::balanced(101, 10, 0.4, 0.8), std::invalid_argument);
}

TEST_CASE("first stage with J=2, J1=1 is a fair coin") {
  DesignConfig cfg;
  cfg.cluster_sizes = {4, 4};
  cfg.high_clusters = 1;
  Rng rng = make_rng(11);
  long first_high = 0;
  const int draws = 100000;
  for (int k = 0; k < draws; ++k) {
    const auto a = sample_first_stage(cfg, rng);
    REQUIRE(a[0] != a[1]);
    first_high += a[0] == Mechanism::a1;
  }
  const std::vector<long> counts = {first_high, draws - first_high};
  const std::vector<double> probs = {0.5, 0.5};
  CHECK(testing::chi_square_pvalue(counts, probs) > 0.01);
}

TEST_CASE("first stage with J=4, J1=2 is uniform over the 6 subsets") {
  const DesignConfig cfg = four_clusters(2);
  Rng rng = make_rng(12);
  std::map<std::vector<Mechanism>, long> freq;
  for (int k = 0; k < 100000; ++k) {
    const auto a = sample_first_stage(cfg, rng);
    REQUIRE(std::count(a.begin(), a.end(), Mechanism::a1) == 2);
    ++freq[a];
  }
  REQUIRE(freq.size() == 6);
  std::vector<long> counts;
  for (const auto& [key, n] : freq) counts.push_back(n);
  const std::vector<double> probs(6, 1.0 / 6.0);
  CHECK(testing::chi_square_pvalue(counts, probs) > 0.01);
}

TEST_CASE("second stage places exactly K ones uniformly") {
  DesignConfig cfg = four_clusters(2);
  Rng rng = make_rng(13);

  SUBCASE("n=2 splits evenly") {
    long first = 0;
    for (int k = 0; k < 20000; ++k) {
      const auto z = sample_second_stage(cfg, Mechanism::a0, 2, rng);
      REQUIRE(z[0] + z[1] == 1);
      first += z[0];
    }
    const std::vector<long> counts = {first, 20000 - first};
    const std::vector<double> probs = {0.5, 0.5};
    CHECK(testing::chi_square_pvalue(counts, probs) > 0.01);
  }

  SUBCASE("n=10 at q=0.4 always has 4 treated, each position equally likely") {
    std::vector<long> hits(10, 0);
    for (int k = 0; k < 50000; ++k) {
      const auto z = sample_second_stage(cfg, Mechanism::a0, 10, rng);
      REQUIRE(std::accumulate(z.begin(), z.end(), 0) == 4);
      for (int i = 0; i < 10; ++i) hits[i] += z[i];
    }
    const std::vector<double> probs(10, 0.1);
    CHECK(testing::chi_square_pvalue(hits, probs) > 0.01);
  }

  SUBCASE("n=5 at q=0.99 clamps to 4") {
    cfg.q1 = 0.99;
    const auto z = sample_second_stage(cfg, Mechanism::a1, 5, rng);
    CHECK(std::accumulate(z.begin(), z.end(), 0) == 4);
  }
}

TEST_CASE("every realization satisfies the exact-count constraints") {
  DesignConfig cfg;
  cfg.cluster_sizes = {2, 3, 7, 10, 23, 50, 4};
  cfg.high_clusters = 3;
  Rng rng = make_rng(14);
  for (int rep = 0; rep < 2000; ++rep) {
    const AssignmentRealization r = sample_assignment(cfg, rng);
    REQUIRE(std::count(r.mechanisms.begin(), r.mechanisms.end(), Mechanism::a1) == 3);
    for (int j = 0; j < cfg.clusters(); ++j) {
      REQUIRE(static_cast<int>(r.z[j].size()) == cfg.cluster_sizes[j]);
      const int treated = std::accumulate(r.z[j].begin(), r.z[j].end(), 0);
      REQUIRE(treated == treated_count(cfg.cluster_sizes[j], cfg.proportion(r.mechanisms[j])));
    }
  }
}

TEST_CASE("assignment is reproducible from the seed") {
  const DesignConfig cfg = DesignConfig::balanced(200, 10, 0.4, 0.8);
  Rng a = make_rng(99);
  Rng b = make_rng(99);
  const auto ra = sample_assignment(cfg, a);
  const auto rb = sample_assignment(cfg, b);
  CHECK(ra.mechanisms == rb.mechanisms);
  CHECK(ra.z == rb.z);
  CHECK(derive_seed(99, 0) != derive_seed(99, 1));
  CHECK(derive_seed(99, 1) != derive_seed(100, 1));
}

TEST_CASE("mechanism labels") {
  CHECK(to_string(Mechanism::a0) == "a0");
  CHECK(parse_mechanism("a1") == Mechanism::a1);
  CHECK_FALSE(parse_mechanism("A1").has_value());
  CHECK(other(Mechanism::a0) == Mechanism::a1);
}
