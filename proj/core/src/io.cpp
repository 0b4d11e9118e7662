#include "twostage/io.hpp"

#include <charconv>
#include <cmath>
#include <limits>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "json.hpp"

namespace twostage {

namespace {

using json = nlohmann::ordered_json;

std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

int parse_binary(std::string_view field, const char* what, long line) {
  if (field == "0") return 0;
  if (field == "1") return 1;
  throw DataError(std::string(what) + " must be 0 or 1, got '" + std::string(field) + "'", line);
}

double parse_real(std::string_view field, long line) {
  double value = 0.0;
  const auto [end, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (field.empty() || ec != std::errc() || end != field.data() + field.size()) {
    throw DataError("y is not a number: '" + std::string(field) + "'", line);
  }
  return value;
}

// ---- config schema helpers -------------------------------------------------

void require_object(const json& j, const std::string& where) {
  if (!j.is_object()) throw ConfigError("config: " + where + " must be an object");
}

void check_keys(const json& j, std::initializer_list<std::string_view> allowed, const std::string& where) {
  require_object(j, where);
  for (const auto& item : j.items()) {
    bool known = false;
    for (auto key : allowed) known = known || key == item.key();
    if (!known) throw ConfigError("config: unknown key '" + where + "." + item.key() + "'");
  }
}

std::string path_of(const std::string& where, const char* key) { return where.empty() ? key : where + "." + key; }

void read_real(const json& j, const char* key, double& out, const std::string& where) {
  if (!j.contains(key)) return;
  if (!j[key].is_number()) throw ConfigError("config: " + path_of(where, key) + " must be a number");
  out = j[key].get<double>();
}

template <class Int>
void read_int(const json& j, const char* key, Int& out, const std::string& where) {
  if (!j.contains(key)) return;
  const json& v = j[key];
  if (!v.is_number_integer()) throw ConfigError("config: " + path_of(where, key) + " must be an integer");
  if constexpr (std::is_unsigned_v<Int>) {
    if (!v.is_number_unsigned()) throw ConfigError("config: " + path_of(where, key) + " must be nonnegative");
  }
  out = v.get<Int>();
}

void read_bool(const json& j, const char* key, bool& out, const std::string& where) {
  if (!j.contains(key)) return;
  if (!j[key].is_boolean()) throw ConfigError("config: " + path_of(where, key) + " must be true or false");
  out = j[key].get<bool>();
}

void read_string(const json& j, const char* key, std::string& out, const std::string& where) {
  if (!j.contains(key)) return;
  if (!j[key].is_string()) throw ConfigError("config: " + path_of(where, key) + " must be a string");
  out = j[key].get<std::string>();
}

Family read_family(const json& j, const char* key, Family fallback, const std::string& where) {
  std::string label(to_string(fallback));
  read_string(j, key, label, where);
  auto f = parse_family(label);
  if (!f) throw ConfigError("config: " + path_of(where, key) + " must be 'lognormal' or 'gamma'");
  return *f;
}

std::array<double, kNumStrata> read_simplex(const json& v, const std::string& where) {
  if (!v.is_array() || v.size() != kNumStrata) {
    throw ConfigError("config: " + where + " must be an array of 6 numbers (cc, aa, nn, ca, nc, na)");
  }
  std::array<double, kNumStrata> out{};
  for (int k = 0; k < kNumStrata; ++k) {
    if (!v[k].is_number()) throw ConfigError("config: " + where + " must contain numbers");
    out[k] = v[k].get<double>();
  }
  return out;
}

template <class Cell>
void read_cells(const json& j, ModelParams<Cell>& m, const std::string& where) {
  require_object(j, where);
  for (const auto& item : j.items()) {
    bool known = false;
    for (const CellKey& key : canonical_cells()) known = known || to_string(key) == item.key();
    if (!known) throw ConfigError("config: unknown cell '" + where + "." + item.key() + "'");
  }
  for (const CellKey& key : canonical_cells()) {
    const std::string name = to_string(key);
    if (!j.contains(name)) continue;
    Cell& cell = m.cells[cell_index(key)];
    const json& c = j[name];
    const std::string at = where + "." + name;
    if constexpr (std::is_same_v<Cell, LogNormalCell>) {
      check_keys(c, {"p", "mu", "sigma2"}, at);
      read_real(c, "p", cell.p, at);
      read_real(c, "mu", cell.mu, at);
      read_real(c, "sigma2", cell.sigma2, at);
    } else {
      check_keys(c, {"p", "alpha", "theta"}, at);
      read_real(c, "p", cell.p, at);
      read_real(c, "alpha", cell.alpha, at);
      read_real(c, "theta", cell.theta, at);
    }
  }
}

DgpConfig read_dgp(const json& j) {
  const std::string where = "dgp";
  check_keys(j, {"family", "preset", "units", "clusters", "q0", "q1", "prob_a0", "pi", "cells"}, where);
  const Family family = read_family(j, "family", Family::lognormal, where);
  std::string preset = "benchmark";
  read_string(j, "preset", preset, where);
  if (preset != "benchmark" && preset != "none") throw ConfigError("config: dgp.preset must be 'benchmark' or 'none'");
  if (preset == "none" && !(j.contains("pi") && j.contains("cells") && j["cells"].size() == kNumCells)) {
    throw ConfigError("config: dgp with preset 'none' needs pi and all 16 cells");
  }
  DgpConfig cfg = family == Family::lognormal ? DgpConfig::lognormal_benchmark() : DgpConfig::gamma_benchmark();
  read_int(j, "units", cfg.units, where);
  read_int(j, "clusters", cfg.clusters, where);
  read_real(j, "q0", cfg.q0, where);
  read_real(j, "q1", cfg.q1, where);
  read_real(j, "prob_a0", cfg.prob_a0, where);
  std::visit(
      [&](auto& m) {
        if (j.contains("pi")) m.pi = read_simplex(j["pi"], "dgp.pi");
        if (j.contains("cells")) read_cells(j["cells"], m, "dgp.cells");
      },
      cfg.params);
  return cfg;
}

json cell_json(const LogNormalCell& c) { return json{{"p", c.p}, {"mu", c.mu}, {"sigma2", c.sigma2}}; }
json cell_json(const GammaCell& c) { return json{{"p", c.p}, {"alpha", c.alpha}, {"theta", c.theta}}; }

// null marks a skipped draw; overflowed values are spelled out so they stay distinct.
json optional_number(const std::optional<double>& v) {
  if (!v) return nullptr;
  if (std::isnan(*v)) return "nan";
  if (std::isinf(*v)) return *v > 0 ? "inf" : "-inf";
  return *v;
}

std::optional<double> read_optional_number(const json& v) {
  if (v.is_null()) return std::nullopt;
  if (v.is_string()) {
    const auto& s = v.get_ref<const std::string&>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    throw DataError("draw spool: unexpected value '" + s + "'");
  }
  return v.get<double>();
}

json number_array(std::span<const double> values) {
  json out = json::array();
  for (double v : values) out.push_back(optional_number(v));
  return out;
}

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

Dataset read_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty input; expected header '" + std::string(kCsvHeader) + "'", 1);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kCsvHeader) throw DataError("header must be exactly '" + std::string(kCsvHeader) + "'", 1);

  std::vector<UnitRecord> records;
  long number = 1;
  long blank_from = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      if (blank_from == 0) blank_from = number;
      continue;
    }
    if (blank_from != 0) throw DataError("blank line inside the data", blank_from);
    const auto fields = split_fields(line);
    if (fields.size() != 6) {
      throw DataError("expected 6 fields, got " + std::to_string(fields.size()), number);
    }
    if (fields[0].empty() || fields[1].empty()) throw DataError("cluster and unit ids must be nonempty", number);
    const auto a = parse_mechanism(fields[2]);
    if (!a) throw DataError("unknown mechanism label '" + std::string(fields[2]) + "'", number);
    records.push_back({std::string(fields[0]), std::string(fields[1]), *a, parse_binary(fields[3], "z", number),
                       parse_binary(fields[4], "d", number), parse_real(fields[5], number)});
  }
  return Dataset::from_records(std::move(records), 2);
}

Dataset load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  return read_csv(in);
}

void write_csv(const Dataset& data, std::ostream& out) {
  out << kCsvHeader << '\n';
  for (const UnitRecord& r : data.records()) {
    out << r.cluster << ',' << r.unit << ',' << to_string(r.mechanism) << ',' << r.z << ',' << r.d << ','
        << format_double(r.y) << '\n';
  }
}

void save_csv(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  write_csv(data, out);
}

void RunConfig::validate() const {
  priors.validate();
  chain.validate();
  if (dgp) dgp->validate();
  if (estimands.empty()) throw ConfigError("config: estimands must not be empty");
  for (const auto& r : estimands) r.validate();
  if (design_q) {
    const auto [q0, q1] = *design_q;
    if (!(q0 > 0.0 && q0 < 1.0 && q1 > 0.0 && q1 < 1.0)) throw ConfigError("config: design.q0/q1 must lie in (0, 1)");
  }
  if (progress_interval < 0) throw ConfigError("config: chain.progress_interval must be >= 0");
  if (study.replications < 2) throw ConfigError("config: study.replications must be >= 2");
  if (study.threads < 0) throw ConfigError("config: study.threads must be >= 0");
  if (study.truth_draws < 100'000) throw ConfigError("config: study.truth_draws must be >= 100000");
}

RunConfig parse_run_config(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  check_keys(j, {"seed", "family", "design", "priors", "chain", "dgp", "estimands", "study", "data", "output"}, "");

  RunConfig cfg;
  read_int(j, "seed", cfg.seed, "");
  cfg.family = read_family(j, "family", cfg.family, "");

  if (j.contains("design")) {
    const json& d = j["design"];
    check_keys(d, {"q0", "q1"}, "design");
    std::array<double, 2> q{0.4, 0.8};
    read_real(d, "q0", q[0], "design");
    read_real(d, "q1", q[1], "design");
    cfg.design_q = q;
  }

  if (j.contains("priors")) {
    const json& p = j["priors"];
    const std::string at = "priors";
    check_keys(p, {"dirichlet_alpha", "beta_a", "beta_b", "mu_mean", "mu_var", "ig_shape", "ig_scale", "rate_shape",
                   "rate_rate", "alpha_shape", "alpha_rate"},
               at);
    if (p.contains("dirichlet_alpha")) cfg.priors.dirichlet_alpha = read_simplex(p["dirichlet_alpha"], "priors.dirichlet_alpha");
    read_real(p, "beta_a", cfg.priors.beta_a, at);
    read_real(p, "beta_b", cfg.priors.beta_b, at);
    read_real(p, "mu_mean", cfg.priors.mu_mean, at);
    read_real(p, "mu_var", cfg.priors.mu_var, at);
    read_real(p, "ig_shape", cfg.priors.ig_shape, at);
    read_real(p, "ig_scale", cfg.priors.ig_scale, at);
    read_real(p, "rate_shape", cfg.priors.rate_shape, at);
    read_real(p, "rate_rate", cfg.priors.rate_rate, at);
    read_real(p, "alpha_shape", cfg.priors.alpha_shape, at);
    read_real(p, "alpha_rate", cfg.priors.alpha_rate, at);
  }

  if (j.contains("chain")) {
    const json& c = j["chain"];
    const std::string at = "chain";
    check_keys(c, {"iterations", "burn_in", "thin", "chains", "check_invariants", "adapt_interval", "progress_interval"},
               at);
    read_int(c, "iterations", cfg.chain.iterations, at);
    read_int(c, "burn_in", cfg.chain.burn_in, at);
    read_int(c, "thin", cfg.chain.thin, at);
    read_int(c, "chains", cfg.chain.chains, at);
    read_bool(c, "check_invariants", cfg.chain.check_invariants, at);
    read_int(c, "adapt_interval", cfg.chain.adapt_interval, at);
    read_int(c, "progress_interval", cfg.progress_interval, at);
  }
  cfg.chain.seed = cfg.seed;

  if (j.contains("dgp")) cfg.dgp = read_dgp(j["dgp"]);

  if (j.contains("estimands")) {
    const json& e = j["estimands"];
    if (!e.is_array()) throw ConfigError("config: estimands must be an array of names");
    cfg.estimands.clear();
    for (const json& name : e) {
      if (!name.is_string()) throw ConfigError("config: estimands must be an array of names");
      try {
        cfg.estimands.push_back(EstimandRequest::parse(name.get<std::string>()));
      } catch (const std::invalid_argument& err) {
        throw ConfigError(std::string("config: ") + err.what());
      }
    }
  }

  if (j.contains("study")) {
    const json& s = j["study"];
    check_keys(s, {"replications", "threads", "truth_draws"}, "study");
    read_int(s, "replications", cfg.study.replications, "study");
    read_int(s, "threads", cfg.study.threads, "study");
    read_int(s, "truth_draws", cfg.study.truth_draws, "study");
  }

  read_string(j, "data", cfg.data, "");
  if (j.contains("output")) {
    check_keys(j["output"], {"dir"}, "output");
    read_string(j["output"], "dir", cfg.out_dir, "output");
  }

  try {
    cfg.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path.string() + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_run_config(text.str());
}

std::string resolved_config_json(const RunConfig& cfg) {
  json j;
  j["seed"] = cfg.seed;
  j["family"] = std::string(to_string(cfg.family));
  if (cfg.design_q) j["design"] = json{{"q0", (*cfg.design_q)[0]}, {"q1", (*cfg.design_q)[1]}};
  const Priors& p = cfg.priors;
  j["priors"] = json{{"dirichlet_alpha", p.dirichlet_alpha},
                     {"beta_a", p.beta_a},
                     {"beta_b", p.beta_b},
                     {"mu_mean", p.mu_mean},
                     {"mu_var", p.mu_var},
                     {"ig_shape", p.ig_shape},
                     {"ig_scale", p.ig_scale},
                     {"rate_shape", p.rate_shape},
                     {"rate_rate", p.rate_rate},
                     {"alpha_shape", p.alpha_shape},
                     {"alpha_rate", p.alpha_rate}};
  const ChainConfig& c = cfg.chain;
  j["chain"] = json{{"iterations", c.iterations},
                    {"burn_in", c.burn_in},
                    {"thin", c.thin},
                    {"chains", c.chains},
                    {"check_invariants", c.check_invariants},
                    {"adapt_interval", c.adapt_interval},
                    {"progress_interval", cfg.progress_interval}};
  if (cfg.dgp) {
    const DgpConfig& d = *cfg.dgp;
    json dj{{"family", std::string(to_string(d.family()))},
            {"preset", "none"},
            {"units", d.units},
            {"clusters", d.clusters},
            {"q0", d.q0},
            {"q1", d.q1},
            {"prob_a0", d.prob_a0}};
    std::visit(
        [&](const auto& m) {
          dj["pi"] = m.pi;
          json cells = json::object();
          for (const CellKey& key : canonical_cells()) cells[to_string(key)] = cell_json(m.cells[cell_index(key)]);
          dj["cells"] = cells;
        },
        d.params);
    j["dgp"] = dj;
  }
  json names = json::array();
  for (const auto& r : cfg.estimands) names.push_back(r.name());
  j["estimands"] = names;
  j["study"] = json{{"replications", cfg.study.replications},
                    {"threads", cfg.study.threads},
                    {"truth_draws", cfg.study.truth_draws}};
  j["data"] = cfg.data;
  j["output"] = json{{"dir", cfg.out_dir}};
  return j.dump(2) + "\n";
}

void write_summary_json(std::span<const NamedSummary> rows, std::ostream& out) {
  json estimands = json::object();
  for (const NamedSummary& r : rows) {
    estimands[r.name] = json{{"mean", finite_or_null(r.summary.mean)},
                             {"median", finite_or_null(r.summary.median)},
                             {"q025", finite_or_null(r.summary.q025)},
                             {"q975", finite_or_null(r.summary.q975)},
                             {"n_draws", r.summary.n_draws},
                             {"skipped", r.skipped},
                             {"nonfinite", r.nonfinite}};
  }
  out << json{{"estimands", estimands}}.dump(2) << '\n';
}

void write_summary_csv(std::span<const NamedSummary> rows, std::ostream& out) {
  // Empty fields stand for estimands without enough finite draws.
  const auto cell = [](double v) { return std::isfinite(v) ? format_double(v) : std::string(); };
  out << "estimand,mean,median,q025,q975,n_draws,skipped,nonfinite\n";
  for (const NamedSummary& r : rows) {
    out << '"' << r.name << "\"," << cell(r.summary.mean) << ',' << cell(r.summary.median) << ','
        << cell(r.summary.q025) << ',' << cell(r.summary.q975) << ',' << r.summary.n_draws << ',' << r.skipped
        << ',' << r.nonfinite << '\n';
  }
}

void write_diagnostics_json(std::span<const ParameterSummary> rows, int draws, bool completed, std::ostream& out) {
  json params = json::object();
  for (const ParameterSummary& r : rows) {
    params[r.name] = json{{"mean", finite_or_null(r.mean)}, {"sd", finite_or_null(r.sd)},
                          {"mcse", finite_or_null(r.mcse)}, {"ess", finite_or_null(r.ess)},
                          {"rhat", finite_or_null(r.rhat)}};
  }
  out << json{{"draws", draws}, {"completed", completed}, {"parameters", params}}.dump(2) << '\n';
}

void write_truth_json(const SuperPopTruth& truth, std::ostream& out) {
  json values = json::object();
  const auto names = study_estimands();
  for (std::size_t k = 0; k < names.size(); ++k) {
    values[names[k].name()] = json{{"value", truth.value[k]}, {"se", truth.se[k]}};
  }
  out << json{{"truth", values}}.dump(2) << '\n';
}

void write_metrics_csv(std::span<const SimMetrics> rows, std::ostream& out) {
  out << "estimand,N,J,n_sim,truth,coverage,bias,mse,skipped\n";
  for (const SimMetrics& m : rows) {
    out << '"' << m.estimand << "\"," << m.units << ',' << m.clusters << ',' << m.n_sim << ','
        << format_double(m.truth) << ',' << format_double(m.coverage) << ',' << format_double(m.bias) << ','
        << format_double(m.mse) << ',' << m.skipped << '\n';
  }
}

DrawSpoolWriter::DrawSpoolWriter(std::ostream& out, Family family, std::vector<std::string> parameters,
                                 const std::vector<EstimandRequest>& estimands)
    : out_(out) {
  json names = json::array();
  for (const auto& r : estimands) names.push_back(r.name());
  out_ << json{{"family", std::string(to_string(family))}, {"parameters", parameters}, {"estimands", names}}.dump()
       << '\n';
}

void DrawSpoolWriter::write(const DrawInfo& info, std::span<const double> params,
                            const std::vector<std::optional<double>>& estimands) {
  json values = json::array();
  for (const auto& v : estimands) values.push_back(optional_number(v));
  out_ << json{{"chain", info.chain},
               {"iteration", info.iteration},
               {"params", number_array(params)},
               {"estimands", values}}
              .dump()
       << '\n';
}

void DrawSpoolWriter::flush() { out_.flush(); }

TraceSet DrawSpool::traces() const {
  TraceSet t;
  t.names = parameters;
  int chains = 0;
  for (int c : chain) chains = std::max(chains, c + 1);
  t.values.assign(parameters.size(), std::vector<std::vector<double>>(chains));
  for (std::size_t d = 0; d < params.size(); ++d) {
    for (std::size_t p = 0; p < parameters.size(); ++p) t.values[p][chain[d]].push_back(params[d][p]);
  }
  return t;
}

EstimandAccumulator DrawSpool::accumulate() const {
  EstimandAccumulator acc(estimands);
  for (const auto& row : estimand_values) acc.add(row);
  return acc;
}

DrawSpool read_draw_spool(std::istream& in) {
  DrawSpool spool;
  std::string line;
  long number = 0;
  auto parse_line = [&](bool last) -> std::optional<json> {
    try {
      return json::parse(line);
    } catch (const json::parse_error&) {
      if (last) return std::nullopt;
      throw DataError("draw spool: malformed record", number);
    }
  };

  if (!std::getline(in, line)) throw DataError("draw spool: empty input", 1);
  number = 1;
  const auto header = parse_line(false);
  try {
    auto family = parse_family(header->at("family").get<std::string>());
    if (!family) throw DataError("draw spool: unknown family", 1);
    spool.family = *family;
    spool.parameters = header->at("parameters").get<std::vector<std::string>>();
    for (const auto& name : header->at("estimands")) spool.estimands.push_back(EstimandRequest::parse(name.get<std::string>()));
  } catch (const json::exception& e) {
    throw DataError(std::string("draw spool: bad header: ") + e.what(), 1);
  }

  std::string next;
  bool have = static_cast<bool>(std::getline(in, line));
  while (have) {
    ++number;
    const bool more = static_cast<bool>(std::getline(in, next));
    if (!line.empty()) {
      const auto record = parse_line(!more);
      if (!record) break;
      try {
        std::vector<double> params;
        for (const json& v : record->at("params")) {
          const auto value = read_optional_number(v);
          if (!value) throw DataError("draw spool: missing parameter value", number);
          params.push_back(*value);
        }
        if (params.size() != spool.parameters.size()) throw DataError("draw spool: wrong parameter count", number);
        std::vector<std::optional<double>> values;
        for (const json& v : record->at("estimands")) {
          values.push_back(read_optional_number(v));
        }
        if (values.size() != spool.estimands.size()) throw DataError("draw spool: wrong estimand count", number);
        const int chain = record->at("chain").get<int>();
        if (chain < 0) throw DataError("draw spool: negative chain index", number);
        spool.chain.push_back(chain);
        spool.params.push_back(params);
        spool.estimand_values.push_back(std::move(values));
      } catch (const json::exception& e) {
        throw DataError(std::string("draw spool: ") + e.what(), number);
      }
    }
    line.swap(next);
    have = more;
  }
  return spool;
}

}  // namespace twostage
