#include "twostage/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "twostage/io.hpp"
#include "twostage/posterior.hpp"
#include "twostage/simharness.hpp"

namespace twostage::cli {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> chains;
  std::string out;
  std::string data;
  std::string draws;
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

RunConfig resolve(const Options& opt) {
  RunConfig cfg = opt.config.empty() ? RunConfig{} : load_run_config(opt.config);
  if (opt.seed) cfg.seed = *opt.seed;
  cfg.chain.seed = cfg.seed;
  if (opt.chains) cfg.chain.chains = *opt.chains;
  if (!opt.out.empty()) cfg.out_dir = opt.out;
  if (!opt.data.empty()) cfg.data = opt.data;
  try {
    cfg.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return cfg;
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  return out;
}

fs::path prepare_dir(const RunConfig& cfg) {
  const fs::path dir(cfg.out_dir);
  fs::create_directories(dir);
  open_output(dir / "resolved_config.json") << resolved_config_json(cfg);
  return dir;
}

json artifact_list(std::initializer_list<fs::path> paths) {
  json list = json::array();
  for (const auto& p : paths) list.push_back(p.string());
  return list;
}

json cmd_simulate(const RunConfig& cfg) {
  if (!cfg.dgp) throw ConfigError("config: simulate needs a 'dgp' section");
  const fs::path dir = prepare_dir(cfg);
  Rng rng = make_rng(cfg.seed, 0);
  const SimulatedData sim = generate_dataset(*cfg.dgp, rng);
  save_csv(sim.data, dir / "data.csv");

  StudyConfig study;
  study.dgp = *cfg.dgp;
  study.seed = cfg.seed;
  study.truth_draws = cfg.study.truth_draws;
  auto truth_out = open_output(dir / "truth.json");
  write_truth_json(study_truth(study), truth_out);

  return json{{"units", sim.data.size()},
              {"clusters", sim.data.clusters()},
              {"artifacts", artifact_list({dir / "data.csv", dir / "truth.json", dir / "resolved_config.json"})}};
}

json cmd_fit(const RunConfig& cfg, std::ostream& err, const std::atomic<bool>* stop, bool& interrupted) {
  if (cfg.data.empty()) throw UsageError("fit needs --data or a 'data' entry in the config");
  const Dataset data = load_csv(cfg.data);
  const fs::path dir = prepare_dir(cfg);

  auto spool_out = open_output(dir / "draws.ndjson");
  DrawSpoolWriter spool(spool_out, cfg.family, parameter_names(cfg.family), cfg.estimands);

  FitOptions options;
  options.family = cfg.family;
  options.priors = cfg.priors;
  options.chain = cfg.chain;
  options.estimands = cfg.estimands;
  options.design_q = cfg.design_q;
  options.record_traces = true;
  options.control.stop = stop;
  options.control.progress_interval = cfg.progress_interval;
  options.control.on_progress = [&err, &cfg](int chain, int iteration) {
    err << json{{"progress", json{{"chain", chain}, {"iteration", iteration}, {"of", cfg.chain.iterations}}}}.dump()
        << std::endl;
  };
  options.on_draw = [&](const DrawInfo& info, std::span<const double> params,
                        const std::vector<std::optional<double>>& values) { spool.write(info, params, values); };

  const FitResult result = fit(data, options);
  spool.flush();
  interrupted = !result.completed;

  std::vector<fs::path> artifacts{dir / "draws.ndjson", dir / "resolved_config.json"};
  bool have_diagnostics = false;
  if (result.traces && result.draws >= 2 * cfg.chain.chains) {
    auto diag_out = open_output(dir / "diagnostics.json");
    write_diagnostics_json(diagnostics(*result.traces), result.draws, result.completed, diag_out);
    have_diagnostics = true;
  }
  json record{{"units", data.size()}, {"clusters", data.clusters()}, {"draws", result.draws}};
  json list = json::array();
  if (have_diagnostics) list.push_back((dir / "diagnostics.json").string());
  for (const auto& p : artifacts) list.push_back(p.string());
  record["artifacts"] = list;
  return record;
}

json cmd_summarize(const RunConfig& cfg, const std::string& draws_path) {
  const fs::path dir(cfg.out_dir);
  const fs::path draws = draws_path.empty() ? dir / "draws.ndjson" : fs::path(draws_path);
  std::ifstream in(draws);
  if (!in) throw DataError("cannot open '" + draws.string() + "'");
  const DrawSpool spool = read_draw_spool(in);
  const auto rows = spool.accumulate().summaries();

  fs::create_directories(dir);
  auto json_out = open_output(dir / "summary.json");
  write_summary_json(rows, json_out);
  auto csv_out = open_output(dir / "summary.csv");
  write_summary_csv(rows, csv_out);
  return json{{"draws", spool.params.size()},
              {"estimands", rows.size()},
              {"artifacts", artifact_list({dir / "summary.json", dir / "summary.csv"})}};
}

json cmd_benchmark(const RunConfig& cfg, std::ostream& err) {
  if (!cfg.dgp) throw ConfigError("config: benchmark needs a 'dgp' section");
  const fs::path dir = prepare_dir(cfg);
  StudyConfig study;
  study.dgp = *cfg.dgp;
  study.fit_family = cfg.family;
  study.priors = cfg.priors;
  study.chain = cfg.chain;
  study.replications = cfg.study.replications;
  study.threads = cfg.study.threads;
  study.seed = cfg.seed;
  study.truth_draws = cfg.study.truth_draws;
  study.estimands.clear();
  for (const auto& r : cfg.estimands) {
    const auto known = study_estimands();
    if (std::find(known.begin(), known.end(), r) != known.end()) study.estimands.push_back(r);
  }
  if (study.estimands.empty()) study.estimands = study_estimands();

  const StudyResult result = run_study(study, {}, [&err](int done, int total) {
    err << json{{"progress", json{{"replication", done}, {"of", total}}}}.dump() << std::endl;
  });
  auto metrics_out = open_output(dir / "metrics.csv");
  write_metrics_csv(result.metrics, metrics_out);
  auto truth_out = open_output(dir / "truth.json");
  write_truth_json(result.truth, truth_out);
  return json{{"replications", study.replications},
              {"artifacts", artifact_list({dir / "metrics.csv", dir / "truth.json", dir / "resolved_config.json"})}};
}

void add_common(CLI::App& sub, Options& opt, bool config_required) {
  auto* config = sub.add_option("--config", opt.config, "JSON run configuration");
  if (config_required) config->required();
  sub.add_option("--seed", opt.seed, "Master seed (overrides the config)");
  sub.add_option("--chains", opt.chains, "Number of chains (overrides the config)")->check(CLI::PositiveNumber);
  sub.add_option("--out", opt.out, "Output directory (overrides the config)");
}

std::pair<std::string, int> classify(const std::exception& e) {
  if (dynamic_cast<const UsageError*>(&e) || dynamic_cast<const ConfigError*>(&e)) return {"config", kUsage};
  if (dynamic_cast<const DataError*>(&e)) return {"data", kBadData};
  if (dynamic_cast<const SamplerFault*>(&e)) return {"sampler", kFailure};
  if (dynamic_cast<const StudyError*>(&e)) return {"study", kFailure};
  return {"runtime", kFailure};
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, const std::atomic<bool>* stop) {
  CLI::App app{"Bayesian principal stratification for two-stage randomized experiments", "twostage"};
  app.require_subcommand(1);
  Options opt;
  auto* simulate = app.add_subcommand("simulate", "Generate a dataset and its super-population truths");
  auto* fit_cmd = app.add_subcommand("fit", "Run the Gibbs sampler and spool retained draws");
  auto* summarize = app.add_subcommand("summarize", "Summarize estimands from a draw spool");
  auto* benchmark = app.add_subcommand("benchmark", "Run a simulation study and score coverage, bias and MSE");
  add_common(*simulate, opt, true);
  add_common(*fit_cmd, opt, true);
  add_common(*summarize, opt, false);
  add_common(*benchmark, opt, true);
  fit_cmd->add_option("--data", opt.data, "Input CSV (cluster,unit,mechanism,z,d,y)");
  summarize->add_option("--draws", opt.draws, "Draw spool (default: <out>/draws.ndjson)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << json{{"status", "error"}, {"kind", "usage"}, {"message", e.what()}}.dump() << std::endl;
    return kUsage;
  }

  std::string command = "unknown";
  for (auto* sub : {simulate, fit_cmd, summarize, benchmark}) {
    if (sub->parsed()) command = sub->get_name();
  }
  try {
    const RunConfig cfg = resolve(opt);
    bool interrupted = false;
    json record;
    if (command == "simulate") record = cmd_simulate(cfg);
    if (command == "fit") record = cmd_fit(cfg, err, stop, interrupted);
    if (command == "summarize") record = cmd_summarize(cfg, opt.draws);
    if (command == "benchmark") record = cmd_benchmark(cfg, err);
    json line{{"command", command}, {"status", interrupted ? "interrupted" : "ok"}, {"seed", cfg.seed}};
    line.update(record);
    out << line.dump() << std::endl;
    return interrupted ? kInterrupted : kOk;
  } catch (const std::exception& e) {
    const auto [kind, code] = classify(e);
    err << json{{"command", command}, {"status", "error"}, {"kind", kind}, {"message", e.what()}}.dump() << std::endl;
    return code;
  }
}

}  // namespace twostage::cli
