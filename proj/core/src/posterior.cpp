#include "twostage/posterior.hpp"

namespace twostage {

namespace {

template <class Cell>
FitResult fit_family(const Dataset& data, const FitOptions& options) {
  const EstimandEvaluator evaluator(data.layout(options.design_q), options.estimands);
  FitResult result{EstimandAccumulator(options.estimands), std::nullopt, true, 0};
  std::optional<TraceRecorder<Cell>> recorder;
  if (options.record_traces) recorder.emplace(options.chain.chains);

  std::vector<std::optional<double>> values;
  std::vector<double> params;
  const DrawVisitor<Cell> visit = [&](const DrawInfo& info, const LatentState<Cell>& state) {
    evaluator.evaluate(state.tables, state.g, values);
    result.estimands.add(values);
    if (recorder) recorder->record(info, state);
    if (options.on_draw) {
      flatten(state.theta, params);
      options.on_draw(info, params, values);
    }
    ++result.draws;
  };
  result.completed = run_chain<Cell>(data, options.priors, options.chain, visit, options.control);
  if (recorder) result.traces = recorder->traces();
  return result;
}

}  // namespace

FitResult fit(const Dataset& data, const FitOptions& options) {
  options.priors.validate();
  options.chain.validate();
  return options.family == Family::lognormal ? fit_family<LogNormalCell>(data, options)
                                             : fit_family<GammaCell>(data, options);
}

std::vector<std::string> parameter_names(Family family) {
  return family == Family::lognormal ? parameter_names<LogNormalCell>() : parameter_names<GammaCell>();
}

}  // namespace twostage
