#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "twostage/simharness.hpp"

using namespace twostage;

namespace {

const ModelParams<LogNormalCell>& lognormal(const DgpConfig& cfg) {
  return std::get<ModelParams<LogNormalCell>>(cfg.params);
}

// Pretends to fit: point = truth + N(0, sd), interval = point +- 1.96 sd.
StudyFitter noisy_oracle(const SuperPopTruth& truth, double sd) {
  return [truth, sd](const SimulatedData&, const std::vector<EstimandRequest>& requests, std::uint64_t seed) {
    Rng rng = make_rng(seed);
    const auto study = study_estimands();
    std::vector<NamedSummary> out;
    for (const auto& r : requests) {
      const auto k = std::find(study.begin(), study.end(), r) - study.begin();
      const double point = truth.value[k] + draw_normal(rng, 0.0, sd);
      EstimandSummary s{point, point, point - 1.96 * sd, point + 1.96 * sd, 100};
      out.push_back({r.name(), s, 0, 0});
    }
    return out;
  };
}

}  // namespace

TEST_CASE("benchmark configurations are valid") {
  const DgpConfig ln = DgpConfig::lognormal_benchmark();
  CHECK_NOTHROW(ln.validate());
  CHECK(ln.family() == Family::lognormal);
  CHECK(lognormal(ln).prob(Stratum::cc) + lognormal(ln).prob(Stratum::ca) == doctest::Approx(0.5));
  const DgpConfig g = DgpConfig::gamma_benchmark();
  CHECK_NOTHROW(g.validate());
  CHECK(g.family() == Family::gamma);

  DgpConfig odd = ln;
  odd.units = 5001;
  CHECK_THROWS_AS(odd.validate(), std::invalid_argument);
  DgpConfig bad = ln;
  std::get<ModelParams<LogNormalCell>>(bad.params).pi[0] = 0.9;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = ln;
  std::get<ModelParams<LogNormalCell>>(bad.params).cells[3].sigma2 = -1.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("generated benchmark data follows the design") {
  Rng rng = make_rng(1);
  const SimulatedData sim = generate_dataset(DgpConfig::lognormal_benchmark(5000, 100), rng);
  REQUIRE(sim.data.size() == 5000);
  REQUIRE(sim.data.clusters() == 100);
  int high = 0;
  for (int j = 0; j < 100; ++j) {
    CHECK(sim.data.members(j).size() == 50);
    const Mechanism a = sim.data.cluster_mechanism(j);
    high += a == Mechanism::a1;
    CHECK(sim.data.observed_treated(j) == (a == Mechanism::a0 ? 20 : 40));
    CHECK(sim.layout.treated[j] == std::array<int, 2>{20, 40});
  }
  CHECK(high == 50);

  for (std::size_t i = 0; i < sim.data.size(); ++i) {
    const UnitRecord& r = sim.data.record(i);
    REQUIRE(r.d == potential_receipt(sim.g[i], r.z, r.mechanism));
    REQUIRE(r.y == sim.tables[i].at(r.z, r.mechanism));
    for (int s = 0; s < kNumSlots; ++s) {
      for (int u = s + 1; u < kNumSlots; ++u) {
        if (cell_index(sim.g[i], s) == cell_index(sim.g[i], u)) REQUIRE(sim.tables[i].y[s] == sim.tables[i].y[u]);
      }
    }
  }
}

TEST_CASE("a never-taker population never receives treatment") {
  DgpConfig cfg = DgpConfig::lognormal_benchmark(400, 20);
  std::get<ModelParams<LogNormalCell>>(cfg.params).pi = {0, 0, 1, 0, 0, 0};
  Rng rng = make_rng(2);
  const SimulatedData sim = generate_dataset(cfg, rng);
  for (const UnitRecord& r : sim.data.records()) CHECK(r.d == 0);
}

TEST_CASE("stratum frequencies match pi at N=50000") {
  const DgpConfig cfg = DgpConfig::lognormal_benchmark(50000, 100);
  Rng rng = make_rng(3);
  const SimulatedData sim = generate_dataset(cfg, rng);
  for (Stratum g : kAllStrata) {
    const double p = lognormal(cfg).prob(g);
    const double freq = std::count(sim.g.begin(), sim.g.end(), g) / 50000.0;
    CHECK(std::abs(freq - p) < 3.0 * std::sqrt(p * (1.0 - p) / 50000.0));
  }
}

TEST_CASE("unequal cluster sizes through an explicit design") {
  DesignConfig design;
  design.cluster_sizes = {3, 17, 8, 40, 2};
  design.high_clusters = 2;
  Rng rng = make_rng(4);
  const SimulatedData sim = generate_dataset(DgpConfig::gamma_benchmark().params, design, rng);
  CHECK(sim.data.size() == 70);
  CHECK(sim.layout.size == std::vector<int>{3, 17, 8, 40, 2});
  CHECK(sim.layout.treated[1] == std::array<int, 2>{7, 14});
}

TEST_CASE("generation is reproducible") {
  const DgpConfig cfg = DgpConfig::lognormal_benchmark(500, 10);
  Rng a = make_rng(5), b = make_rng(5);
  CHECK(generate_dataset(cfg, a).data == generate_dataset(cfg, b).data);
}

TEST_CASE("analytic truths for the benchmark") {
  // Reference values are rounded to two decimals.
  const auto t = superpop_truth_analytic(DgpConfig::lognormal_benchmark());
  CHECK(std::abs(t.value[0] - 4765.78) < 0.005);
  CHECK(std::abs(t.value[1] - 5156.41) < 0.005);
  CHECK(std::abs(t.value[2] - 2382.89) < 0.005);
  CHECK(std::abs(t.value[3] - 2324.13) < 0.005);
  CHECK(t.value[4] == doctest::Approx(0.5));
  CHECK(t.value[5] == doctest::Approx(0.45));

  const auto exact = superpop_truth_analytic(DgpConfig::lognormal_benchmark(), TruthFormula::exact);
  CHECK(exact.value[0] == doctest::Approx(t.value[0]).epsilon(1e-12));
  CHECK(exact.value[2] == t.value[2]);
  CHECK(std::abs(exact.value[1] - 5164.74) < 0.005);

  CHECK_THROWS_AS(superpop_truth_analytic(DgpConfig::gamma_benchmark()), std::invalid_argument);
}

TEST_CASE("analytic truths vanish when cells do not depend on z") {
  DgpConfig cfg = DgpConfig::lognormal_benchmark();
  auto& m = std::get<ModelParams<LogNormalCell>>(cfg.params);
  for (Stratum g : kAllStrata) {
    for (Mechanism a : {Mechanism::a0, Mechanism::a1}) {
      m.cells[cell_index(g, slot_index(1, a))] = m.cells[cell_index(g, slot_index(0, a))];
    }
  }
  const auto t = superpop_truth_analytic(cfg);
  for (int k = 0; k < 4; ++k) CHECK(t.value[k] == 0.0);
}

TEST_CASE("brute-force truths agree with the analytic path") {
  const DgpConfig cfg = DgpConfig::lognormal_benchmark();
  Rng rng = make_rng(6);
  const auto mc = superpop_truth_bruteforce(cfg, rng, 1'000'000);
  const auto exact = superpop_truth_analytic(cfg, TruthFormula::exact);
  for (int k = 0; k < 6; ++k) {
    INFO("slot " << k << ": " << mc.value[k] << " +- " << mc.se[k] << " vs " << exact.value[k]);
    CHECK(mc.se[k] > 0.0);
    CHECK(std::abs(mc.value[k] - exact.value[k]) < 3.0 * mc.se[k]);
  }
  CHECK_THROWS_AS(superpop_truth_bruteforce(cfg, rng, 99'999), std::invalid_argument);
}

TEST_CASE("brute force with degenerate cells reduces to exp(mu) differences") {
  DgpConfig cfg = DgpConfig::lognormal_benchmark();
  auto& m = std::get<ModelParams<LogNormalCell>>(cfg.params);
  for (int c = 0; c < kNumCells; ++c) m.cells[c] = {0.0, 1.0 + 0.25 * c, 1e-14};
  Rng rng = make_rng(7);
  const auto mc = superpop_truth_bruteforce(cfg, rng, 100'000);
  const auto exact = superpop_truth_analytic(cfg, TruthFormula::exact);
  // cc compliers at a0: exp(mu[cc,1,a0]) - exp(mu[cc,0,a0]) is shared with ca at a0.
  const double cc_a0 = std::exp(1.25) - std::exp(1.0);
  const double ca_a0 = std::exp(1.0 + 0.25 * 9) - std::exp(1.0 + 0.25 * 8);
  const double w = m.pi[0] / (m.pi[0] + m.pi[3]);
  CHECK(exact.value[0] == doctest::Approx(w * cc_a0 + (1 - w) * ca_a0));
  CHECK(mc.value[0] == doctest::Approx(exact.value[0]).epsilon(0.01));
  for (int k = 0; k < 6; ++k) CHECK(std::abs(mc.value[k] - exact.value[k]) < 4.0 * mc.se[k] + 1e-9);
}

TEST_CASE("gamma brute-force truths are finite with standard errors") {
  Rng rng = make_rng(8);
  const auto t = superpop_truth_bruteforce(DgpConfig::gamma_benchmark(), rng, 200'000);
  for (int k = 0; k < 6; ++k) {
    CHECK(std::isfinite(t.value[k]));
    CHECK(t.se[k] > 0.0);
  }
  CHECK(std::abs(t.value[4] - 0.43) < 4.0 * t.se[4]);  // pi_cc + pi_ca
  CHECK(std::abs(t.value[5] - 0.40) < 4.0 * t.se[5]);  // pi_cc + pi_nc
}

TEST_CASE("harness self-test: an oracle with known noise gets nominal coverage") {
  StudyConfig cfg;
  cfg.dgp = DgpConfig::lognormal_benchmark(40, 4);
  cfg.replications = 2000;
  cfg.seed = 9;
  cfg.threads = 2;
  const SuperPopTruth truth = study_truth(cfg);
  const StudyResult r = run_study(cfg, noisy_oracle(truth, 10.0));
  REQUIRE(r.metrics.size() == 6);
  const double se = std::sqrt(0.95 * 0.05 / 2000);
  for (const SimMetrics& m : r.metrics) {
    INFO(m.estimand << " coverage " << m.coverage);
    CHECK(std::abs(m.coverage - 0.95) < 3.0 * se);
    CHECK(std::abs(m.bias) < 3.0 * 10.0 / std::sqrt(2000.0));
    CHECK(m.mse == doctest::Approx(100.0).epsilon(0.1));
    CHECK(m.mse >= m.bias * m.bias);
    CHECK(m.n_sim == 2000);
    CHECK(m.units == 40);
  }
}

TEST_CASE("studies are independent of the thread count") {
  StudyConfig cfg;
  cfg.dgp = DgpConfig::lognormal_benchmark(40, 4);
  cfg.replications = 30;
  cfg.seed = 10;
  const SuperPopTruth truth = study_truth(cfg);
  cfg.threads = 1;
  const auto one = run_study(cfg, noisy_oracle(truth, 5.0));
  cfg.threads = 4;
  const auto four = run_study(cfg, noisy_oracle(truth, 5.0));
  for (std::size_t k = 0; k < one.metrics.size(); ++k) {
    CHECK(one.metrics[k].bias == four.metrics[k].bias);
    CHECK(one.metrics[k].mse == four.metrics[k].mse);
  }
}

TEST_CASE("failing replications are reported by index") {
  StudyConfig cfg;
  cfg.dgp = DgpConfig::lognormal_benchmark(40, 4);
  cfg.replications = 12;
  cfg.seed = 11;
  cfg.threads = 3;
  const std::uint64_t bad_seed = derive_seed(derive_seed(cfg.seed, 7), 1);
  const auto oracle = noisy_oracle(study_truth(cfg), 1.0);
  StudyFitter fitter = [&](const SimulatedData& sim, const std::vector<EstimandRequest>& req, std::uint64_t seed) {
    if (seed == bad_seed || seed == derive_seed(derive_seed(cfg.seed, 9), 1)) throw SamplerFault("boom");
    return oracle(sim, req, seed);
  };
  try {
    run_study(cfg, fitter);
    FAIL("expected a StudyError");
  } catch (const StudyError& e) {
    CHECK(e.replication() == 7);
    CHECK(std::string(e.what()).find("boom") != std::string::npos);
  }
}

TEST_CASE("scoring follows the coverage, bias and MSE definitions") {
  StudyConfig cfg;
  cfg.estimands = {EstimandRequest::parse("DED(a0)")};
  SuperPopTruth truth;
  truth.value[4] = 0.5;
  const auto row = [](double median, double lo, double hi, int skipped) {
    return std::vector<NamedSummary>{{"DED(a0)", {median, median, lo, hi, 10}, skipped, 0}};
  };
  const auto m = score_study(cfg, truth, {row(0.6, 0.4, 0.7, 1), row(0.3, 0.35, 0.45, 0), row(0.5, 0.5, 0.5, 2)});
  REQUIRE(m.size() == 1);
  CHECK(m[0].truth == 0.5);
  CHECK(m[0].coverage == doctest::Approx(2.0 / 3.0));
  CHECK(m[0].bias == doctest::Approx((0.1 - 0.2 + 0.0) / 3.0));
  CHECK(m[0].mse == doctest::Approx((0.01 + 0.04) / 3.0));
  CHECK(m[0].skipped == 3);
}

TEST_CASE("study validation") {
  StudyConfig cfg;
  cfg.replications = 1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = StudyConfig{};
  cfg.estimands = {EstimandRequest::parse("SEY(0)")};
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = StudyConfig{};
  cfg.truth_draws = 10;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("a small real study runs end to end") {
  StudyConfig cfg;
  cfg.dgp = DgpConfig::lognormal_benchmark(400, 8);
  cfg.replications = 2;
  cfg.chain.iterations = 60;
  cfg.chain.burn_in = 20;
  cfg.threads = 1;
  int progress = 0;
  const auto r = run_study(cfg, {}, [&](int done, int total) {
    CHECK(total == 2);
    progress = done;
  });
  CHECK(progress == 2);
  REQUIRE(r.replications.size() == 2);
  for (const auto& rep : r.replications) {
    REQUIRE(rep.size() == 6);
    CHECK(rep[0].name == "CADE(a0;a0)");
    CHECK(rep[4].summary.n_draws == 40);
  }
}

TEST_CASE("a chain started at the truth stays there when strata are well separated") {
  DgpConfig cfg = DgpConfig::lognormal_benchmark(2000, 40);
  auto& m = std::get<ModelParams<LogNormalCell>>(cfg.params);
  const double level[kNumStrata] = {5, 10, 2, 12, 0.5, 14};
  for (int c = 0; c < kNumCells; ++c) {
    const CellKey k = canonical_cells()[c];
    m.cells[c] = {0.1, level[index_of(k.g)] + k.z + 0.5 * index_of(k.a), 0.3};
  }
  Rng rng = make_rng(5);
  const SimulatedData sim = generate_dataset(cfg, rng);

  Rng chain = make_rng(6);
  LatentState<LogNormalCell> s = initial_state<LogNormalCell>(sim.data);
  s.theta = m;
  const Priors priors;
  std::array<double, kNumStrata> count{};
  std::array<double, kNumStrata> truth{};
  for (Stratum g : sim.g) truth[index_of(g)] += 1.0;
  double agree = 0.0;
  const int sweeps = 600;
  for (int it = 0; it < sweeps; ++it) {
    step_sample_strata(s, sim.data, chain);
    step_impute_missing(s, sim.data, chain);
    step_update_params(s, sim.data, priors, chain);
    for (std::size_t i = 0; i < s.g.size(); ++i) {
      count[index_of(s.g[i])] += 1.0 / sweeps;
      agree += s.g[i] == sim.g[i] ? 1.0 / sweeps : 0.0;
    }
  }
  for (int k = 0; k < kNumStrata; ++k) {
    INFO(to_string(kAllStrata[k]) << ": " << count[k] << " vs " << truth[k]);
    CHECK(std::abs(count[k] - truth[k]) < 0.25 * truth[k] + 10);
  }
  CHECK(agree / static_cast<double>(sim.g.size()) > 0.7);
}
