#include "mlgvar/error.hpp"
#include "mlgvar/simulation.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

namespace mlgvar {
namespace {

std::string shortest(double v) {
  if (std::isnan(v)) return "NA";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

SimEstimator parse_sim_estimator(std::string_view text) {
  if (text == "mlvar-two-step" || text == "two-step") return SimEstimator::TwoStep;
  if (text == "mlvar-pooled-lasso" || text == "pooled-lasso") return SimEstimator::PooledLasso;
  throw Error(ErrorCode::ConfigInvalid, "simulation estimator must be mlvar-two-step or mlvar-pooled-lasso");
}

std::string_view to_string(SimEstimator estimator) {
  return estimator == SimEstimator::TwoStep ? "mlvar-two-step" : "mlvar-pooled-lasso";
}

std::uint64_t replication_seed(std::uint64_t base_seed, int replication) {
  return base_seed ^ static_cast<std::uint64_t>(replication);
}

std::string condition_label(const SimStudyConfig& c) {
  return "n" + std::to_string(c.nodes) + "_p" + std::to_string(c.subjects) + "_t" + std::to_string(c.occasions) + "_" +
         std::string(to_string(c.temporal_condition)) + "_r" + shortest(c.rewire_prob);
}

SimulatedData simulate_replication(const SimStudyConfig& config, int replication) {
  Rng rng(replication_seed(config.seed, replication));
  SimulatedData out;
  out.truth = build_true_model(config, rng);
  out.panel = simulate_panel(out.truth, config.occasions, rng);
  return out;
}

std::vector<ScoreRow> run_replication(const StudyConfig& config, int replication) {
  const auto [truth, panel] = simulate_replication(config.sim, replication);
  if (config.estimator == SimEstimator::TwoStep) {
    const MlVarFit fit = fit_mlvar(panel, config.mlvar);
    return score(truth, estimate_from(fit, config.alpha, config.rule));
  }
  const PooledLassoFit fit = pooled_individual_lasso(panel, config.pooled);
  return score(truth, estimate_from(fit));
}

std::vector<StudyRow> run_study(const StudyConfig& config) {
  if (config.replications < 1) throw Error(ErrorCode::ConfigInvalid, "replications must be positive");
  validate(config.sim);
  const std::string condition = condition_label(config.sim);
  std::vector<StudyRow> rows;
  for (int r = 0; r < config.replications; ++r) {
    for (const ScoreRow& s : run_replication(config, r)) {
      const std::pair<const char*, double> metrics[] = {{"sensitivity", s.metrics.sensitivity},
                                                        {"specificity", s.metrics.specificity},
                                                        {"correlation", s.metrics.correlation},
                                                        {"bias", s.metrics.bias},
                                                        {"mse", s.metrics.mse}};
      for (const auto& [name, value] : metrics) rows.push_back({r, condition, s.network, s.level, name, value});
    }
  }
  return rows;
}

std::string study_csv(const std::vector<StudyRow>& rows) {
  std::ostringstream out;
  out << "replication,condition,network_type,level,metric,value\n";
  for (const auto& r : rows)
    out << r.replication << ',' << r.condition << ',' << to_string(r.network) << ',' << to_string(r.level) << ','
        << r.metric << ',' << shortest(r.value) << '\n';
  return out.str();
}

}  // namespace mlgvar
