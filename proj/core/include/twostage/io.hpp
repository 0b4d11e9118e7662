#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "twostage/dataset.hpp"
#include "twostage/diagnostics.hpp"
#include "twostage/estimands.hpp"
#include "twostage/gibbs.hpp"
#include "twostage/outcome_model.hpp"
#include "twostage/simharness.hpp"

namespace twostage {

inline constexpr std::string_view kCsvHeader = "cluster,unit,mechanism,z,d,y";

/// Reads records under the exact header above. Errors are DataError with the line number.
Dataset read_csv(std::istream& in);
Dataset load_csv(const std::filesystem::path& path);

/// Writes y with 17 significant digits so a reload reproduces the dataset exactly.
void write_csv(const Dataset& data, std::ostream& out);
void save_csv(const Dataset& data, const std::filesystem::path& path);

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct StudySettings {
  int replications = 100;
  int threads = 0;
  long truth_draws = 1'000'000;
};

/// Everything a command needs. Unknown keys are rejected; omitted keys take these defaults.
struct RunConfig {
  std::uint64_t seed = 20220101;
  Family family = Family::lognormal;               ///< model family used by fit
  std::optional<std::array<double, 2>> design_q;   ///< counterfactual K_j(a) saturations for fit
  Priors priors;
  ChainConfig chain;
  int progress_interval = 0;                       ///< sweeps between progress lines; 0 = silent
  std::optional<DgpConfig> dgp;
  std::vector<EstimandRequest> estimands = all_estimands();
  StudySettings study;
  std::string data;                                ///< input CSV for fit
  std::string out_dir = "out";

  /// Propagates `seed` into the chain and validates every section.
  void validate() const;
};

RunConfig parse_run_config(std::string_view json_text);
RunConfig load_run_config(const std::filesystem::path& path);

/// Every field written out explicitly, with a stable key order.
std::string resolved_config_json(const RunConfig& cfg);

void write_summary_json(std::span<const NamedSummary> rows, std::ostream& out);
void write_summary_csv(std::span<const NamedSummary> rows, std::ostream& out);
void write_diagnostics_json(std::span<const ParameterSummary> rows, int draws, bool completed, std::ostream& out);
void write_truth_json(const SuperPopTruth& truth, std::ostream& out);
void write_metrics_csv(std::span<const SimMetrics> rows, std::ostream& out);

/// NDJSON draw spool: a header line, then one line per retained draw.
class DrawSpoolWriter {
 public:
  DrawSpoolWriter(std::ostream& out, Family family, std::vector<std::string> parameters,
                  const std::vector<EstimandRequest>& estimands);
  void write(const DrawInfo& info, std::span<const double> params,
             const std::vector<std::optional<double>>& estimands);
  void flush();

 private:
  std::ostream& out_;
};

struct DrawSpool {
  Family family = Family::lognormal;
  std::vector<std::string> parameters;
  std::vector<EstimandRequest> estimands;
  std::vector<int> chain;
  std::vector<std::vector<double>> params;                        ///< per draw
  std::vector<std::vector<std::optional<double>>> estimand_values; ///< per draw

  /// Parameter traces grouped by chain, ready for diagnostics().
  TraceSet traces() const;
  EstimandAccumulator accumulate() const;
};

/// A truncated final line (interrupted writer) is ignored; any other defect throws DataError.
DrawSpool read_draw_spool(std::istream& in);

}  // namespace twostage
