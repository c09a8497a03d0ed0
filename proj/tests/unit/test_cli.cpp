#include <doctest.h>
#include <json.hpp>

#include "app.hpp"

#include <mlgvar/error.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

namespace fs = std::filesystem;
using mlgvar::app::RunConfig;
using mlgvar::app::RunResult;

namespace {

fs::path scratch(const std::string& name) {
  const char* env = std::getenv("MLGVAR_TEST_TMP");
  const fs::path dir = fs::path(env ? env : fs::temp_directory_path().string()) / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

std::string cross_sectional_csv(int n) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> z;
  std::ostringstream out;
  out << "a,b,c,d\n";
  for (int i = 0; i < n; ++i) {
    const double x = z(rng), y = 0.6 * x + z(rng);
    out << x << ',' << y << ',' << 0.5 * y + z(rng) << ',' << z(rng) << '\n';
  }
  return out.str();
}

RunResult run_quiet(const RunConfig& c) {
  std::ostringstream log;
  return mlgvar::app::run(c, log);
}

bool parse(std::vector<std::string> args, RunConfig& c) {
  args.insert(args.begin(), "mlgvar");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out;
  return mlgvar::app::parse_command_line(static_cast<int>(argv.size()), argv.data(), c, out);
}

RunConfig small_simulation(const fs::path& dir) {
  RunConfig c;
  c.estimator = "simulate";
  c.nodes = 4;
  c.subjects = 20;
  c.occasions = 30;
  c.replications = 2;
  c.output_dir = dir.string();
  return c;
}

}  // namespace

TEST_CASE("ggm on cross-sectional data") {
  const fs::path dir = scratch("ggm");
  spit(dir / "data.csv", cross_sectional_csv(300));
  RunConfig c;
  c.input = (dir / "data.csv").string();
  c.output_dir = (dir / "out").string();
  const RunResult r = run_quiet(c);
  REQUIRE(r.exit_code == 0);
  CHECK(fs::exists(dir / "out" / "ggm.json"));
  CHECK(fs::exists(dir / "out" / "manifest.json"));
  const std::string dot = slurp(dir / "out" / "ggm.dot");
  CHECK(dot.find("\"a\" -- \"b\"") != std::string::npos);
  const auto j = nlohmann::json::parse(slurp(dir / "out" / "ggm.json"));
  CHECK(j.is_object());
}

TEST_CASE("simulate writes one score row per metric and replication") {
  const fs::path dir = scratch("simulate");
  RunConfig c = small_simulation(dir);
  c.export_panel = true;
  REQUIRE(run_quiet(c).exit_code == 0);
  const std::string csv = slurp(dir / "scores.csv");
  CHECK(csv.rfind("replication,condition,network_type,level,metric,value\n", 0) == 0);
  // 5 network/level combinations x 5 metrics x 2 replications
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 50);
  CHECK(fs::exists(dir / "true_model.json"));
  CHECK(fs::exists(dir / "panel.csv"));
}

TEST_CASE("invalid alpha is a config error") {
  const fs::path dir = scratch("alpha");
  RunConfig c = small_simulation(dir);
  c.alpha = 0.0;
  const RunResult r = run_quiet(c);
  CHECK(r.exit_code != 0);
  CHECK(r.error_code == "CONFIG_INVALID");
  const auto err = nlohmann::json::parse(slurp(dir / "error.json"));
  CHECK(err["error"] == "CONFIG_INVALID");
  CHECK_FALSE(fs::exists(dir / "scores.csv"));
}

TEST_CASE("unknown flag is a config error") {
  RunConfig c;
  CHECK_THROWS_AS(parse({"--bogus"}, c), mlgvar::Error);
}

TEST_CASE("written config reproduces the run") {
  const fs::path dir = scratch("config");
  RunConfig c = small_simulation(dir / "a");
  c.rewire_prob = 0.2;
  c.variables = {};
  REQUIRE(run_quiet(c).exit_code == 0);

  RunConfig again;
  REQUIRE(parse({"--config", (dir / "a" / "run.toml").string(), "--output-dir", (dir / "b").string()}, again));
  CHECK(again.rewire_prob == 0.2);
  CHECK(again.subjects == 20);
  REQUIRE(run_quiet(again).exit_code == 0);
  CHECK(slurp(dir / "a" / "scores.csv") == slurp(dir / "b" / "scores.csv"));
}

TEST_CASE("flags override the config file") {
  const fs::path dir = scratch("override");
  spit(dir / "run.toml", "estimator = \"simulate\"\nnodes = 5\nalpha = 0.01\n");
  RunConfig c;
  REQUIRE(parse({"--config", (dir / "run.toml").string(), "--nodes", "6"}, c));
  CHECK(c.nodes == 6);
  CHECK(c.alpha == 0.01);
  CHECK(c.estimator == "simulate");
}

TEST_CASE("manifest rerun") {
  const fs::path dir = scratch("manifest");
  REQUIRE(run_quiet(small_simulation(dir / "a")).exit_code == 0);
  const RunConfig back = mlgvar::app::from_manifest(slurp(dir / "a" / "manifest.json"));
  CHECK(back.nodes == 4);
  CHECK(back.output_dir == (dir / "a").string());

  RunConfig c;
  REQUIRE(parse({"--from-manifest", (dir / "a" / "manifest.json").string(), "--output-dir", (dir / "b").string()}, c));
  REQUIRE(run_quiet(c).exit_code == 0);
  CHECK(slurp(dir / "a" / "scores.csv") == slurp(dir / "b" / "scores.csv"));
  const auto m = nlohmann::json::parse(slurp(dir / "b" / "manifest.json"));
  CHECK(m["estimator"] == "simulate");
  CHECK(m["config"]["output-dir"] == (dir / "b").string());
}

TEST_CASE("output directory from the environment") {
  const fs::path dir = scratch("env");
  RunConfig c = small_simulation(dir);
  c.output_dir.clear();
  c.replications = 1;
  ::setenv("MLGVAR_OUTPUT_DIR", (dir / "from-env").string().c_str(), 1);
  CHECK(mlgvar::app::resolve_output_dir(c) == (dir / "from-env").string());
  REQUIRE(run_quiet(c).exit_code == 0);
  ::unsetenv("MLGVAR_OUTPUT_DIR");
  CHECK(fs::exists(dir / "from-env" / "scores.csv"));
  CHECK(mlgvar::app::resolve_output_dir(c) == "mlgvar-out");
}

TEST_CASE("two-step mlVAR on an exported panel") {
  const fs::path dir = scratch("mlvar");
  RunConfig sim = small_simulation(dir / "sim");
  sim.replications = 1;
  sim.export_panel = true;
  REQUIRE(run_quiet(sim).exit_code == 0);

  RunConfig c;
  c.estimator = "mlvar-two-step";
  c.input = (dir / "sim" / "panel.csv").string();
  c.id_column = "id";
  c.time_column = "time";
  c.output_dir = (dir / "fit").string();
  const RunResult r = run_quiet(c);
  REQUIRE(r.exit_code == 0);
  for (const char* f : {"mlvar.json", "temporal.dot", "contemporaneous.dot", "between.dot", "edges.csv"})
    CHECK(fs::exists(dir / "fit" / f));
  const auto j = nlohmann::json::parse(slurp(dir / "fit" / "mlvar.json"));
  CHECK(j.is_object());
}
