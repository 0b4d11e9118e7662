#pragma once

#include <array>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "twostage/dataset.hpp"
#include "twostage/diagnostics.hpp"
#include "twostage/estimands.hpp"
#include "twostage/gibbs.hpp"
#include "twostage/outcome_model.hpp"

namespace twostage {

/// Family-agnostic view of one retained draw: flattened theta and estimand values.
using DrawSink = std::function<void(const DrawInfo&, std::span<const double> params,
                                    const std::vector<std::optional<double>>& estimands)>;

struct FitOptions {
  Family family = Family::lognormal;
  Priors priors;
  ChainConfig chain;
  std::vector<EstimandRequest> estimands = all_estimands();
  /// Design saturations used for counterfactual K_j(a); nullopt uses observed shares.
  std::optional<std::array<double, 2>> design_q;
  bool record_traces = false;
  RunControl control;
  DrawSink on_draw;
};

struct FitResult {
  EstimandAccumulator estimands;
  std::optional<TraceSet> traces;
  bool completed = true;
  int draws = 0;
};

FitResult fit(const Dataset& data, const FitOptions& options);

std::vector<std::string> parameter_names(Family family);

}  // namespace twostage
