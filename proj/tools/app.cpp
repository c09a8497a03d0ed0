#include "app.hpp"

#include <mlgvar/error.hpp>
#include <mlgvar/io.hpp>
#include <mlgvar/version.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <sstream>

namespace mlgvar::app {
namespace {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

template <class F>
void for_each_field(RunConfig& c, F&& f) {
  f("estimator", c.estimator, "ggm, gvar, mlvar-two-step, mlvar-pooled-lasso or simulate");
  f("alpha", c.alpha, "significance level in (0, 1]");
  f("rule", c.rule, "and | or: edge rule for paired p-values");
  f("gamma", c.gamma, "EBIC hyperparameter");
  f("random", c.random, "random effects: unique, correlated, orthogonal or fixed");
  f("contemporaneous-random", c.contemporaneous_random, "random effects for the contemporaneous step (default: --random)");
  f("adjust", c.adjust, "multiple-comparison adjustment: none, bonferroni or holm");
  f("pvalues", c.pvalues, "z (Wald z) or t (Wald t, residual df)");
  f("ggm-method", c.ggm_method, "ebic-glasso or threshold");
  f("grid-size", c.grid_size, "glasso penalty grid size");
  f("grid-beta", c.grid_beta, "GVAR temporal penalty grid size");
  f("grid-kappa", c.grid_kappa, "GVAR contemporaneous penalty grid size");
  f("day-policy", c.day_policy, "break or bridge lags across days");
  f("output-dir", c.output_dir, "output directory (env MLGVAR_OUTPUT_DIR)");
  f("seed", c.seed, "random seed");
  f("input", c.input, "long-format CSV");
  f("id-column", c.id_column, "subject id column");
  f("day-column", c.day_column, "day column");
  f("time-column", c.time_column, "time column ordering rows within a subject");
  f("subject", c.subject, "subject id for gvar");
  f("variables", c.variables, "variable columns (default: all remaining)");
  f("missing-tokens", c.missing_tokens, "cell values read as missing");
  f("no-standardize", c.no_standardize, "keep variables on their raw scale");
  f("nodes", c.nodes, "simulation: number of variables");
  f("subjects", c.subjects, "simulation: number of subjects");
  f("occasions", c.occasions, "simulation: occasions per subject");
  f("temporal-condition", c.temporal_condition, "simulation: chain or skip");
  f("rewire-prob", c.rewire_prob, "simulation: per-subject rewiring probability");
  f("replications", c.replications, "simulation: replications");
  f("sim-estimator", c.sim_estimator, "simulation: mlvar-two-step or mlvar-pooled-lasso");
  f("individual-limit", c.individual_limit, "pooled LASSO: subjects with individual fits (-1: all)");
  f("export-panel", c.export_panel, "simulation: write the first replication's panel as CSV");
}

std::string toml_value(const std::string& s) {
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"' || ch == '\\') out += '\\';
    out += ch;
  }
  return out + "\"";
}
std::string toml_value(double v) { return format_shortest(v); }
std::string toml_value(bool v) { return v ? "true" : "false"; }
template <class T>
  requires std::is_integral_v<T>
std::string toml_value(T v) {
  return std::to_string(v);
}
std::string toml_value(const std::vector<std::string>& v) {
  std::string out = "[";
  for (std::size_t k = 0; k < v.size(); ++k) out += (k ? ", " : "") + toml_value(v[k]);
  return out + "]";
}

void require(bool ok, const std::string& message) {
  if (!ok) throw Error(ErrorCode::ConfigInvalid, message);
}

template <class T>
bool one_of(const T& v, std::initializer_list<const char*> options) {
  for (const char* o : options)
    if (v == o) return true;
  return false;
}

struct Writer {
  std::string dir;
  std::vector<std::string> artifacts;

  void put(const std::string& name, const std::string& contents) {
    write_file((fs::path(dir) / name).string(), contents);
    artifacts.push_back(name);
  }
};

PanelData load_input(const RunConfig& c) {
  require(!c.input.empty(), "--input is required for estimator " + c.estimator);
  IngestSpec spec;
  spec.path = c.input;
  spec.id_column = c.id_column;
  if (!c.day_column.empty()) spec.day_column = c.day_column;
  if (!c.time_column.empty()) spec.time_column = c.time_column;
  spec.variables = c.variables;
  spec.missing_tokens = c.missing_tokens;
  spec.standardize = !c.no_standardize;
  return ingest(spec);
}

MlVarOptions mlvar_options(const RunConfig& c) {
  MlVarOptions o;
  o.temporal_random = parse_random_spec(c.random);
  o.contemporaneous_random = parse_random_spec(c.contemporaneous_random.empty() ? c.random : c.contemporaneous_random);
  o.day_policy = c.day_policy == "bridge" ? DayPolicy::Bridge : DayPolicy::Break;
  o.lmm.pvalues = c.pvalues == "t" ? PValueMethod::WaldT : PValueMethod::WaldZ;
  return o;
}

PooledLassoOptions pooled_options(const RunConfig& c) {
  PooledLassoOptions o;
  o.gvar.gamma = c.gamma;
  o.gvar.grid_beta_size = c.grid_beta;
  o.gvar.grid_kappa_size = c.grid_kappa;
  o.between.gamma = c.gamma;
  o.between.grid_size = c.grid_size;
  o.day_policy = c.day_policy == "bridge" ? DayPolicy::Bridge : DayPolicy::Break;
  o.individual_limit = c.individual_limit;
  return o;
}

void run_ggm(const RunConfig& c, Writer& w) {
  const PanelData panel = load_input(c);
  const MatrixXd data = complete_rows(panel);
  const CovMatrix s = sample_covariance(data);
  if (c.ggm_method == "threshold") {
    const GgmNetwork full = partial_correlations(precision_from_covariance(s), panel.labels);
    const GgmNetwork net = threshold_significance(full, s.n, c.alpha);
    w.put("ggm.json", network_json(net));
    w.put("ggm.dot", undirected_dot(net, "ggm"));
    w.put("edges.csv", edges_csv(undirected_edges(net, nullptr, "ggm")));
    return;
  }
  EbicGlassoOptions o;
  o.gamma = c.gamma;
  o.grid_size = c.grid_size;
  const EbicGlassoResult r = ebic_glasso(s, o, panel.labels);
  w.put("ggm.json", ggm_json(r, s.n));
  w.put("ggm.dot", undirected_dot(r.network, "ggm"));
  w.put("edges.csv", edges_csv(undirected_edges(r.network, nullptr, "ggm")));
}

void run_gvar(const RunConfig& c, Writer& w) {
  const PanelData panel = load_input(c);
  std::size_t which = 0;
  if (!c.subject.empty()) {
    const auto it = std::find(panel.ids.begin(), panel.ids.end(), c.subject);
    require(it != panel.ids.end(), "subject '" + c.subject + "' not found in input");
    which = static_cast<std::size_t>(it - panel.ids.begin());
  } else {
    require(panel.size() == 1, "input has " + std::to_string(panel.size()) + " subjects; choose one with --subject");
  }
  GvarSearchOptions o;
  o.gamma = c.gamma;
  o.grid_beta_size = c.grid_beta;
  o.grid_kappa_size = c.grid_kappa;
  const DayPolicy policy = c.day_policy == "bridge" ? DayPolicy::Bridge : DayPolicy::Break;
  const GvarSearchResult r = gvar_ebic_search(build_lagged_design(panel.subjects[which], policy), o, panel.labels);
  w.put("gvar.json", gvar_json(r));
  w.put("temporal.dot", directed_dot(r.model.beta, r.model.temporal_included, panel.labels));
  w.put("contemporaneous.dot", undirected_dot(r.model.contemporaneous, "contemporaneous"));
  auto edges = directed_edges(r.model.beta, r.model.temporal_included, nullptr, panel.labels, "temporal");
  auto cont = undirected_edges(r.model.contemporaneous, nullptr, "contemporaneous");
  edges.insert(edges.end(), cont.begin(), cont.end());
  w.put("edges.csv", edges_csv(edges));
}

void run_mlvar(const RunConfig& c, Writer& w) {
  const PanelData panel = load_input(c);
  const MlVarFit fit = fit_mlvar(panel, mlvar_options(c));
  const Rule rule = parse_rule(c.rule);
  const Adjustment adj = parse_adjustment(c.adjust);
  w.put("mlvar.json", mlvar_json(fit, c.alpha, rule));

  const BoolMatrix keep = threshold_temporal(fit.temporal_p, c.alpha, adj);
  const GgmNetwork cont = threshold_rule(fit.contemporaneous_fixed, fit.contemporaneous_p, rule, c.alpha, adj);
  w.put("temporal.dot", directed_dot(fit.temporal_fixed, keep, fit.labels));
  w.put("contemporaneous.dot", undirected_dot(cont, "contemporaneous"));
  auto edges = directed_edges(fit.temporal_fixed, keep, &fit.temporal_p, fit.labels, "temporal");
  auto more = undirected_edges(cont, &fit.contemporaneous_p, "contemporaneous");
  edges.insert(edges.end(), more.begin(), more.end());
  if (fit.between_available) {
    const GgmNetwork between = threshold_rule(fit.between, fit.between_p, rule, c.alpha, adj);
    w.put("between.dot", undirected_dot(between, "between"));
    more = undirected_edges(between, &fit.between_p, "between");
    edges.insert(edges.end(), more.begin(), more.end());
  }
  w.put("edges.csv", edges_csv(edges));
}

void run_pooled(const RunConfig& c, Writer& w) {
  const PanelData panel = load_input(c);
  const PooledLassoFit fit = pooled_individual_lasso(panel, pooled_options(c));
  w.put("pooled.json", pooled_json(fit));
  const GvarModel& m = fit.pooled.model;
  w.put("temporal.dot", directed_dot(m.beta, m.temporal_included, fit.labels));
  w.put("contemporaneous.dot", undirected_dot(m.contemporaneous, "contemporaneous"));
  auto edges = directed_edges(m.beta, m.temporal_included, nullptr, fit.labels, "temporal");
  auto more = undirected_edges(m.contemporaneous, nullptr, "contemporaneous");
  edges.insert(edges.end(), more.begin(), more.end());
  if (fit.between) {
    w.put("between.dot", undirected_dot(fit.between->network, "between"));
    more = undirected_edges(fit.between->network, nullptr, "between");
    edges.insert(edges.end(), more.begin(), more.end());
  }
  w.put("edges.csv", edges_csv(edges));
}

void run_simulate(const RunConfig& c, Writer& w, std::ostream& log) {
  StudyConfig sc;
  sc.sim.nodes = c.nodes;
  sc.sim.subjects = c.subjects;
  sc.sim.occasions = c.occasions;
  sc.sim.temporal_condition = parse_temporal_condition(c.temporal_condition);
  sc.sim.rewire_prob = c.rewire_prob;
  sc.sim.seed = c.seed;
  sc.replications = c.replications;
  sc.estimator = parse_sim_estimator(c.sim_estimator);
  sc.alpha = c.alpha;
  sc.rule = parse_rule(c.rule);
  sc.mlvar = mlvar_options(c);
  sc.pooled = pooled_options(c);
  validate(sc.sim);

  const SimulatedData first = simulate_replication(sc.sim, 0);
  w.put("true_model.json", true_model_json(first.truth));
  if (c.export_panel) w.put("panel.csv", panel_csv(first.panel));

  std::vector<StudyRow> rows;
  const std::string condition = condition_label(sc.sim);
  for (int r = 0; r < sc.replications; ++r) {
    log << "replication " << r + 1 << "/" << sc.replications << "\n";
    for (const ScoreRow& s : run_replication(sc, r)) {
      const std::pair<const char*, double> metrics[] = {{"sensitivity", s.metrics.sensitivity},
                                                        {"specificity", s.metrics.specificity},
                                                        {"correlation", s.metrics.correlation},
                                                        {"bias", s.metrics.bias},
                                                        {"mse", s.metrics.mse}};
      for (const auto& [name, value] : metrics) rows.push_back({r, condition, s.network, s.level, name, value});
    }
  }
  w.put("scores.csv", study_csv(rows));
}

}  // namespace

void validate(const RunConfig& c) {
  require(one_of(c.estimator, {"ggm", "gvar", "mlvar-two-step", "mlvar-pooled-lasso", "simulate"}),
          "unknown estimator '" + c.estimator + "'");
  require(c.alpha > 0.0 && c.alpha <= 1.0, "alpha must lie in (0, 1]");
  require(one_of(c.rule, {"and", "or"}), "rule must be 'and' or 'or'");
  require(c.gamma >= 0.0, "gamma must be nonnegative");
  require(one_of(c.random, {"unique", "correlated", "orthogonal", "fixed"}), "unknown random spec '" + c.random + "'");
  require(c.contemporaneous_random.empty() ||
              one_of(c.contemporaneous_random, {"unique", "correlated", "orthogonal", "fixed"}),
          "unknown random spec '" + c.contemporaneous_random + "'");
  require(one_of(c.adjust, {"none", "bonferroni", "holm"}), "adjust must be none, bonferroni or holm");
  require(one_of(c.pvalues, {"z", "t"}), "pvalues must be 'z' or 't'");
  require(one_of(c.ggm_method, {"ebic-glasso", "threshold"}), "ggm-method must be ebic-glasso or threshold");
  require(c.grid_size >= 1 && c.grid_beta >= 1 && c.grid_kappa >= 1, "grid sizes must be positive");
  require(one_of(c.day_policy, {"break", "bridge"}), "day-policy must be 'break' or 'bridge'");
  require(one_of(c.temporal_condition, {"chain", "skip"}), "temporal-condition must be 'chain' or 'skip'");
  require(c.rewire_prob >= 0.0 && c.rewire_prob <= 1.0, "rewire-prob must lie in [0, 1]");
  require(c.nodes >= 2 && c.subjects >= 1 && c.occasions >= 1 && c.replications >= 1,
          "simulation counts must be positive");
  require(one_of(c.sim_estimator, {"mlvar-two-step", "mlvar-pooled-lasso"}),
          "sim-estimator must be mlvar-two-step or mlvar-pooled-lasso");
}

std::string resolve_output_dir(const RunConfig& c) {
  if (!c.output_dir.empty()) return c.output_dir;
  if (const char* env = std::getenv("MLGVAR_OUTPUT_DIR"); env && *env) return env;
  return "mlgvar-out";
}

bool parse_command_line(int argc, const char* const* argv, RunConfig& c, std::ostream& out) {
  CLI::App cli{"Gaussian graphical, graphical VAR and multilevel VAR network estimation"};
  cli.set_version_flag("--version", std::string(kVersion));
  cli.set_config("--config", "", "TOML config file; command-line flags take precedence");
  std::string manifest;
  cli.add_option("--from-manifest", manifest, "re-run the configuration stored in a manifest.json");
  for_each_field(c, [&](const char* name, auto& field, const char* help) {
    using T = std::decay_t<decltype(field)>;
    const std::string flag = std::string("--") + name;
    if constexpr (std::is_same_v<T, bool>) cli.add_flag(flag, field, help);
    else cli.add_option(flag, field, help)->capture_default_str();
  });
  try {
    cli.parse(argc, argv);
  } catch (const CLI::Success& e) {
    cli.exit(e, out, out);
    return false;
  } catch (const CLI::ParseError& e) {
    throw Error(ErrorCode::ConfigInvalid, e.what());
  }
  if (!manifest.empty()) {
    const std::string keep_dir = c.output_dir;
    c = from_manifest(read_file(manifest));
    if (cli.count("--output-dir") > 0) c.output_dir = keep_dir;
  }
  return true;
}

std::string to_config_file(const RunConfig& config) {
  RunConfig c = config;
  std::ostringstream out;
  out << "# mlgvar " << kVersion << " run configuration\n";
  for_each_field(c, [&](const char* name, auto& field, const char*) {
    // Empty strings and lists are the defaults; the config reader rejects empty lists.
    if constexpr (requires { field.empty(); })
      if (field.empty()) return;
    out << name << " = " << toml_value(field) << "\n";
  });
  return out.str();
}

std::string to_json(const RunConfig& config) {
  RunConfig c = config;
  Json j = Json::object();
  for_each_field(c, [&](const char* name, auto& field, const char*) { j[name] = field; });
  return j.dump(2);
}

RunConfig from_manifest(const std::string& manifest_json) {
  Json j;
  try {
    j = Json::parse(manifest_json);
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::ConfigInvalid, std::string("manifest is not valid JSON: ") + e.what());
  }
  const Json& cfg = j.contains("config") ? j.at("config") : j;
  RunConfig c;
  for_each_field(c, [&](const char* name, auto& field, const char*) {
    if (!cfg.contains(name)) return;
    try {
      cfg.at(name).get_to(field);
    } catch (const Json::exception&) {
      throw Error(ErrorCode::ConfigInvalid, std::string("manifest field '") + name + "' has the wrong type");
    }
  });
  return c;
}

RunResult fail(const RunConfig& config, const std::string& code, const std::string& message, std::ostream& log) {
  RunResult result;
  result.exit_code = code == "CONFIG_INVALID" ? 2 : 1;
  result.output_dir = resolve_output_dir(config);
  result.error_code = code;
  result.message = message;
  const Json err{{"error", code}, {"message", message}, {"version", kVersion}};
  try {
    std::error_code ec;
    fs::create_directories(result.output_dir, ec);
    write_file((fs::path(result.output_dir) / "error.json").string(), err.dump(2) + "\n");
    result.artifacts.push_back("error.json");
  } catch (const Error&) {
    // Still reported through the log and the exit code.
  }
  log << "error: " << code << ": " << message << "\n";
  return result;
}

RunResult run(const RunConfig& config, std::ostream& log) {
  RunResult result;
  result.output_dir = resolve_output_dir(config);
  Writer w{result.output_dir, {}};
  try {
    std::error_code ec;
    fs::create_directories(result.output_dir, ec);
    if (ec) throw Error(ErrorCode::Io, "cannot create output directory '" + result.output_dir + "': " + ec.message());
    validate(config);
    if (config.estimator == "ggm") run_ggm(config, w);
    else if (config.estimator == "gvar") run_gvar(config, w);
    else if (config.estimator == "mlvar-two-step") run_mlvar(config, w);
    else if (config.estimator == "mlvar-pooled-lasso") run_pooled(config, w);
    else run_simulate(config, w, log);

    RunConfig stored = config;
    stored.output_dir = result.output_dir;
    Json manifest{{"tool", "mlgvar"},
                  {"version", kVersion},
                  {"estimator", config.estimator},
                  {"seed", config.seed},
                  {"config", Json::parse(to_json(stored))},
                  {"artifacts", w.artifacts}};
    w.put("run.toml", to_config_file(stored));
    manifest["artifacts"].push_back("run.toml");
    write_file((fs::path(result.output_dir) / "manifest.json").string(), manifest.dump(2) + "\n");
    w.artifacts.push_back("manifest.json");
  } catch (const Error& e) {
    result.exit_code = e.code() == ErrorCode::ConfigInvalid ? 2 : 1;
    result.error_code = std::string(to_string(e.code()));
    result.message = e.what();
  } catch (const std::exception& e) {
    result.exit_code = 1;
    result.error_code = "INTERNAL";
    result.message = e.what();
  }
  if (result.exit_code != 0) {
    RunResult failed = fail(config, result.error_code, result.message, log);
    w.artifacts.insert(w.artifacts.end(), failed.artifacts.begin(), failed.artifacts.end());
  }
  result.artifacts = w.artifacts;
  return result;
}

}  // namespace mlgvar::app
