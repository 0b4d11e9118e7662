#include <benchmark/benchmark.h>

#include "twostage/simharness.hpp"

using namespace twostage;

namespace {

SimulatedData benchmark_data(int units) {
  Rng rng = make_rng(1);
  return generate_dataset(DgpConfig::lognormal_benchmark(units, units / 50), rng);
}

template <class Cell>
void gibbs_sweep(benchmark::State& state) {
  const SimulatedData sim = benchmark_data(static_cast<int>(state.range(0)));
  const Priors priors;
  Rng rng = make_rng(2);
  LatentState<Cell> s = initial_state<Cell>(sim.data);
  for (auto _ : state) {
    step_sample_strata(s, sim.data, rng);
    step_impute_missing(s, sim.data, rng);
    step_update_params(s, sim.data, priors, rng);
    benchmark::DoNotOptimize(s.theta.pi[0]);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void estimand_evaluation(benchmark::State& state) {
  const SimulatedData sim = benchmark_data(static_cast<int>(state.range(0)));
  const EstimandEvaluator eval(sim.layout, all_estimands());
  std::vector<std::optional<double>> out;
  for (auto _ : state) {
    eval.evaluate(sim.tables, sim.g, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void bruteforce_truth(benchmark::State& state) {
  const DgpConfig cfg = DgpConfig::lognormal_benchmark();
  Rng rng = make_rng(3);
  for (auto _ : state) benchmark::DoNotOptimize(superpop_truth_bruteforce(cfg, rng, state.range(0)));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void analytic_truth(benchmark::State& state) {
  const DgpConfig cfg = DgpConfig::lognormal_benchmark();
  for (auto _ : state) benchmark::DoNotOptimize(superpop_truth_analytic(cfg));
}

}  // namespace

BENCHMARK(gibbs_sweep<LogNormalCell>)->Arg(1000)->Arg(5000)->Unit(benchmark::kMicrosecond);
BENCHMARK(gibbs_sweep<GammaCell>)->Arg(5000)->Unit(benchmark::kMicrosecond);
BENCHMARK(estimand_evaluation)->Arg(5000)->Unit(benchmark::kMicrosecond);
BENCHMARK(bruteforce_truth)->Arg(1'000'000)->Unit(benchmark::kMillisecond);
BENCHMARK(analytic_truth);

BENCHMARK_MAIN();
