#pragma once

// Data generators and scoring for multilevel GVAR simulation studies.
//
// Contemporaneous networks are chains, temporal networks are directed chains
// (i -> i+1) or skip chains (i -> i+2), and the between-subjects network is a
// random graph with as many edges as the contemporaneous chain. Edge weights
// are N(mean, sd) magnitudes with half of the signs negative.

#include "mlgvar/mlvar.hpp"

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace mlgvar {

using Rng = std::mt19937_64;

struct Edge {
  int from = 0;
  int to = 0;
  friend bool operator==(const Edge&, const Edge&) = default;
};

/// Undirected graphs store each edge once with from < to.
struct Graph {
  int nodes = 0;
  bool directed = false;
  std::vector<Edge> edges;

  std::size_t edge_count() const { return edges.size(); }
  bool has_edge(int from, int to) const;
  /// Number of distinct edge slots (no self-loops).
  std::size_t slot_count() const;
};

struct WeightedGraph {
  Graph graph;
  std::vector<double> weights;  // aligned with graph.edges

  /// Weight matrix; undirected graphs fill both triangles. Directed edges
  /// from -> to land at (to, from), i.e. row = response.
  MatrixXd matrix() const;
};

Graph gen_chain_graph(int m);
/// Directed i -> i+1.
Graph gen_temporal_chain(int m);
/// Directed i -> i+2 only.
Graph gen_skip_chain(int m);
/// Uniformly sampled distinct undirected edges. Throws ConfigInvalid when
/// `edge_count` exceeds m(m-1)/2.
Graph gen_random_graph(int m, std::size_t edge_count, Rng& rng);

/// Exactly floor(edge_count * negative_fraction) negative flags in random
/// positions (floor(E/2) for the default fraction).
std::vector<bool> draw_signs(std::size_t edge_count, Rng& rng, double negative_fraction = 0.5);

/// Magnitudes N(mean, sd); edge k gets sign `negative[k]`.
WeightedGraph assign_weights(const Graph& graph, const std::vector<bool>& negative, Rng& rng, double mean = 0.35,
                             double sd = 0.1);

/// Each edge independently moves, with probability `prob`, to a uniformly
/// chosen free slot. Edge order (and therefore sign alignment) is preserved.
Graph rewire(const Graph& graph, double prob, Rng& rng);

enum class TemporalCondition { Chain, Skip };
TemporalCondition parse_temporal_condition(std::string_view text);
std::string_view to_string(TemporalCondition condition);

struct SimStudyConfig {
  int nodes = 8;
  int subjects = 100;
  int occasions = 100;
  TemporalCondition temporal_condition = TemporalCondition::Chain;
  double rewire_prob = 0.0;
  double weight_mean = 0.35;
  double weight_sd = 0.1;
  double negative_fraction = 0.5;
  bool temporal_self_loops = false;
  double self_loop_weight = 0.3;
  std::uint64_t seed = 1;
};

/// Throws ConfigInvalid for nonpositive counts or probabilities outside [0, 1].
void validate(const SimStudyConfig& config);

struct TrueModel {
  std::vector<MatrixXd> beta;    // per subject, row = response
  std::vector<MatrixXd> kappa;   // K(Theta_p)
  std::vector<MatrixXd> theta;   // Theta_p
  std::vector<GgmNetwork> contemporaneous;  // partials of K(Theta_p)
  MatrixXd between_precision;    // K(Omega), unit diagonal
  MatrixXd omega;
  GgmNetwork between;
  MatrixXd mu;                   // subjects x nodes
  MatrixXd temporal_fixed;       // mean of beta
  MatrixXd contemporaneous_fixed;  // mean of the subjects' partials
  std::vector<bool> temporal_signs;
  std::vector<bool> contemporaneous_signs;
  std::vector<bool> between_signs;

  std::size_t subjects() const { return beta.size(); }
  Eigen::Index nodes() const { return omega.rows(); }
};

TrueModel build_true_model(const SimStudyConfig& config, Rng& rng);

/// y_0 ~ N(mu_p, Sigma_p) with Sigma_p the stationary covariance, then
/// y_t = mu_p + B_p (y_{t-1} - mu_p) + e_t, e_t ~ N(0, Theta_p).
PanelData simulate_panel(const TrueModel& model, int occasions, Rng& rng);

// Scoring.

enum class NetworkType { Temporal, Contemporaneous, Between };
enum class Level { Fixed, Subject };
std::string_view to_string(NetworkType type);
std::string_view to_string(Level level);

struct Metrics {
  double sensitivity = 0.0;
  double specificity = 0.0;
  double correlation = 0.0;
  double bias = 0.0;  // mean |true - estimate|
  double mse = 0.0;
};

/// Directed: all m^2 slots (self-loops included). Undirected: upper triangle.
Metrics score_network(const MatrixXd& truth, const MatrixXd& estimate, bool directed);

struct NetworkEstimate {
  MatrixXd temporal_fixed;  // zero where excluded
  MatrixXd contemporaneous_fixed;
  std::optional<MatrixXd> between;
  std::vector<std::optional<MatrixXd>> temporal_subject;
  std::vector<std::optional<MatrixXd>> contemporaneous_subject;
};

/// Thresholded fixed networks (alpha, rule); saturated subject networks.
NetworkEstimate estimate_from(const MlVarFit& fit, double alpha, Rule rule,
                              Adjustment adjustment = Adjustment::None);
NetworkEstimate estimate_from(const PooledLassoFit& fit);

struct ScoreRow {
  NetworkType network;
  Level level;
  Metrics metrics;
  std::size_t subjects_scored = 0;  // subject level: number averaged
};

/// Subject-level metrics average over the subjects that have an estimate;
/// NaN correlations are skipped in that average.
std::vector<ScoreRow> score(const TrueModel& truth, const NetworkEstimate& estimate);

// Replicated studies.

enum class SimEstimator { TwoStep, PooledLasso };
SimEstimator parse_sim_estimator(std::string_view text);
std::string_view to_string(SimEstimator estimator);

struct StudyConfig {
  SimStudyConfig sim;
  int replications = 1;
  SimEstimator estimator = SimEstimator::TwoStep;
  double alpha = 0.05;
  Rule rule = Rule::And;
  MlVarOptions mlvar;
  PooledLassoOptions pooled;
};

struct StudyRow {
  int replication = 0;
  std::string condition;
  NetworkType network;
  Level level;
  std::string metric;
  double value = 0.0;
};

std::uint64_t replication_seed(std::uint64_t base_seed, int replication);
std::string condition_label(const SimStudyConfig& config);

struct SimulatedData {
  TrueModel truth;
  PanelData panel;
};

/// The model and panel of one replication (seeded by replication_seed).
SimulatedData simulate_replication(const SimStudyConfig& config, int replication);

/// Runs one replication: build the model, simulate, estimate, score.
std::vector<ScoreRow> run_replication(const StudyConfig& config, int replication);

std::vector<StudyRow> run_study(const StudyConfig& config);

/// Tidy CSV: replication,condition,network_type,level,metric,value
std::string study_csv(const std::vector<StudyRow>& rows);

}  // namespace mlgvar
