#pragma once

// Run configuration and estimator dispatch behind the mlgvar command line.

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

namespace mlgvar::app {

struct RunConfig {
  std::string estimator = "ggm";  // ggm | gvar | mlvar-two-step | mlvar-pooled-lasso | simulate
  double alpha = 0.05;
  std::string rule = "and";
  double gamma = 0.25;
  std::string random = "correlated";
  std::string contemporaneous_random;  // empty: same as random
  std::string adjust = "none";
  std::string pvalues = "z";
  std::string ggm_method = "ebic-glasso";  // or "threshold"
  int grid_size = 100;
  int grid_beta = 10;
  int grid_kappa = 10;
  std::string day_policy = "break";
  std::string output_dir;
  std::uint64_t seed = 1;

  std::string input;
  std::string id_column;
  std::string day_column;
  std::string time_column;
  std::string subject;  // gvar: which subject to fit
  std::vector<std::string> variables;
  std::vector<std::string> missing_tokens{"", "NA"};
  bool no_standardize = false;

  int nodes = 8;
  int subjects = 100;
  int occasions = 100;
  std::string temporal_condition = "chain";
  double rewire_prob = 0.0;
  int replications = 1;
  std::string sim_estimator = "mlvar-two-step";
  long individual_limit = -1;
  bool export_panel = false;
};

/// Throws Error(ConfigInvalid) on invalid enumerations or ranges.
void validate(const RunConfig& config);

/// Output directory after the env fallback (MLGVAR_OUTPUT_DIR, then "mlgvar-out").
std::string resolve_output_dir(const RunConfig& config);

/// Parses argv; flags override a --config file, which overrides defaults.
/// Returns false (after printing help/version) when the program should exit 0
/// without running; throws Error(ConfigInvalid) for bad arguments.
bool parse_command_line(int argc, const char* const* argv, RunConfig& config, std::ostream& out);

/// Re-runnable config file (TOML subset accepted by --config).
std::string to_config_file(const RunConfig& config);

std::string to_json(const RunConfig& config);
RunConfig from_manifest(const std::string& manifest_json);

struct RunResult {
  int exit_code = 0;
  std::string output_dir;
  std::vector<std::string> artifacts;
  std::string error_code;  // empty on success
  std::string message;
};

/// Runs the configured estimator and writes artifacts. Errors are caught,
/// written to error.json and reported through the exit code.
RunResult run(const RunConfig& config, std::ostream& log);

/// Writes error.json into the resolved output directory and logs the error.
RunResult fail(const RunConfig& config, const std::string& code, const std::string& message, std::ostream& log);

}  // namespace mlgvar::app
