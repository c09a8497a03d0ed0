#include "mlgvar/simulation.hpp"

#include "mlgvar/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mlgvar {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<Edge> all_slots(int m, bool directed) {
  std::vector<Edge> slots;
  for (int i = 0; i < m; ++i)
    for (int j = directed ? 0 : i + 1; j < m; ++j)
      if (i != j) slots.push_back({i, j});
  return slots;
}

MatrixXd draw_mvn(const MatrixXd& cov, Eigen::Index count, Rng& rng) {
  const Eigen::LLT<MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) throw Error(ErrorCode::GenerationFailure, "covariance is not positive definite");
  std::normal_distribution<double> z;
  MatrixXd out(count, cov.rows());
  for (Eigen::Index r = 0; r < count; ++r) {
    VectorXd v(cov.rows());
    for (Eigen::Index j = 0; j < v.size(); ++j) v(j) = z(rng);
    out.row(r) = (llt.matrixL() * v).transpose();
  }
  return out;
}

double nan_mean(const std::vector<double>& values) {
  double sum = 0.0;
  long count = 0;
  for (double v : values)
    if (std::isfinite(v)) {
      sum += v;
      ++count;
    }
  return count > 0 ? sum / static_cast<double>(count) : kNaN;
}

}  // namespace

bool Graph::has_edge(int from, int to) const {
  if (!directed && from > to) std::swap(from, to);
  return std::find(edges.begin(), edges.end(), Edge{from, to}) != edges.end();
}

std::size_t Graph::slot_count() const {
  const auto m = static_cast<std::size_t>(nodes);
  return directed ? m * (m - 1) : m * (m - 1) / 2;
}

MatrixXd WeightedGraph::matrix() const {
  MatrixXd w = MatrixXd::Zero(graph.nodes, graph.nodes);
  for (std::size_t k = 0; k < graph.edges.size(); ++k) {
    const Edge& e = graph.edges[k];
    if (graph.directed) {
      w(e.to, e.from) = weights[k];
    } else {
      w(e.from, e.to) = weights[k];
      w(e.to, e.from) = weights[k];
    }
  }
  return w;
}

Graph gen_chain_graph(int m) {
  if (m < 2) throw Error(ErrorCode::ConfigInvalid, "chain graph needs at least 2 nodes");
  Graph g{m, false, {}};
  for (int i = 0; i + 1 < m; ++i) g.edges.push_back({i, i + 1});
  return g;
}

Graph gen_temporal_chain(int m) {
  Graph g = gen_chain_graph(m);
  g.directed = true;
  return g;
}

Graph gen_skip_chain(int m) {
  if (m < 3) throw Error(ErrorCode::ConfigInvalid, "skip chain needs at least 3 nodes");
  Graph g{m, true, {}};
  for (int i = 0; i + 2 < m; ++i) g.edges.push_back({i, i + 2});
  return g;
}

Graph gen_random_graph(int m, std::size_t edge_count, Rng& rng) {
  std::vector<Edge> slots = all_slots(m, false);
  if (edge_count > slots.size()) throw Error(ErrorCode::ConfigInvalid, "more edges requested than node pairs");
  // Partial Fisher-Yates: the first edge_count slots form a uniform sample.
  for (std::size_t k = 0; k < edge_count; ++k) {
    std::uniform_int_distribution<std::size_t> pick(k, slots.size() - 1);
    std::swap(slots[k], slots[pick(rng)]);
  }
  slots.resize(edge_count);
  std::sort(slots.begin(), slots.end(), [](const Edge& a, const Edge& b) {
    return a.from != b.from ? a.from < b.from : a.to < b.to;
  });
  return Graph{m, false, std::move(slots)};
}

std::vector<bool> draw_signs(std::size_t edge_count, Rng& rng, double negative_fraction) {
  const auto negatives = static_cast<std::size_t>(std::floor(static_cast<double>(edge_count) * negative_fraction));
  std::vector<bool> negative(edge_count, false);
  std::vector<std::size_t> idx(edge_count);
  for (std::size_t k = 0; k < edge_count; ++k) idx[k] = k;
  for (std::size_t k = 0; k < negatives; ++k) {
    std::uniform_int_distribution<std::size_t> pick(k, edge_count - 1);
    std::swap(idx[k], idx[pick(rng)]);
    negative[idx[k]] = true;
  }
  return negative;
}

WeightedGraph assign_weights(const Graph& graph, const std::vector<bool>& negative, Rng& rng, double mean, double sd) {
  if (negative.size() != graph.edges.size())
    throw Error(ErrorCode::ShapeMismatch, "sign vector does not match the edge count");
  WeightedGraph wg{graph, std::vector<double>(graph.edges.size())};
  std::normal_distribution<double> z;
  for (std::size_t k = 0; k < graph.edges.size(); ++k) {
    const double magnitude = std::abs(mean + sd * z(rng));
    wg.weights[k] = negative[k] ? -magnitude : magnitude;
  }
  return wg;
}

Graph rewire(const Graph& graph, double prob, Rng& rng) {
  if (prob < 0.0 || prob > 1.0) throw Error(ErrorCode::ConfigInvalid, "rewire probability must lie in [0, 1]");
  Graph out = graph;
  if (prob == 0.0) return out;
  const std::vector<Edge> slots = all_slots(graph.nodes, graph.directed);
  std::bernoulli_distribution coin(prob);
  for (auto& edge : out.edges) {
    if (!coin(rng)) continue;
    std::vector<std::size_t> free;
    for (std::size_t s = 0; s < slots.size(); ++s)
      if (!out.has_edge(slots[s].from, slots[s].to)) free.push_back(s);
    if (free.empty()) continue;
    std::uniform_int_distribution<std::size_t> pick(0, free.size() - 1);
    edge = slots[free[pick(rng)]];
  }
  return out;
}

TemporalCondition parse_temporal_condition(std::string_view text) {
  if (text == "chain") return TemporalCondition::Chain;
  if (text == "skip") return TemporalCondition::Skip;
  throw Error(ErrorCode::ConfigInvalid, "temporal condition must be 'chain' or 'skip'");
}

std::string_view to_string(TemporalCondition condition) {
  return condition == TemporalCondition::Chain ? "chain" : "skip";
}

void validate(const SimStudyConfig& c) {
  if (c.nodes < 2) throw Error(ErrorCode::ConfigInvalid, "nodes must be at least 2");
  if (c.temporal_condition == TemporalCondition::Skip && c.nodes < 3)
    throw Error(ErrorCode::ConfigInvalid, "the skip condition needs at least 3 nodes");
  if (c.subjects < 1 || c.occasions < 1) throw Error(ErrorCode::ConfigInvalid, "subjects and occasions must be positive");
  if (!(c.rewire_prob >= 0.0 && c.rewire_prob <= 1.0))
    throw Error(ErrorCode::ConfigInvalid, "rewire probability must lie in [0, 1]");
  if (!(c.negative_fraction >= 0.0 && c.negative_fraction <= 1.0))
    throw Error(ErrorCode::ConfigInvalid, "negative fraction must lie in [0, 1]");
  if (!(c.weight_sd >= 0.0)) throw Error(ErrorCode::ConfigInvalid, "weight sd must be nonnegative");
}

TrueModel build_true_model(const SimStudyConfig& config, Rng& rng) {
  validate(config);
  const int m = config.nodes;
  const Graph contemporaneous = gen_chain_graph(m);
  const Graph temporal =
      config.temporal_condition == TemporalCondition::Chain ? gen_temporal_chain(m) : gen_skip_chain(m);
  const Graph between = gen_random_graph(m, contemporaneous.edge_count(), rng);

  TrueModel model;
  model.contemporaneous_signs = draw_signs(contemporaneous.edge_count(), rng, config.negative_fraction);
  model.temporal_signs = draw_signs(temporal.edge_count(), rng, config.negative_fraction);
  model.between_signs = draw_signs(between.edge_count(), rng, config.negative_fraction);

  // Between precision: diagonally dominant, then scaled to unit diagonal.
  const MatrixXd wb = assign_weights(between, model.between_signs, rng, config.weight_mean, config.weight_sd).matrix();
  MatrixXd kb = -wb;
  for (Eigen::Index i = 0; i < m; ++i) kb(i, i) = wb.row(i).cwiseAbs().sum() + 0.1;
  const VectorXd scale = kb.diagonal().cwiseSqrt().cwiseInverse();
  model.between_precision = scale.asDiagonal() * kb * scale.asDiagonal();
  model.omega = linalg::symmetrize(model.between_precision.inverse());
  model.between = partial_correlations(PrecisionMatrix{model.between_precision});

  const auto n = static_cast<std::size_t>(config.subjects);
  model.temporal_fixed = MatrixXd::Zero(m, m);
  model.contemporaneous_fixed = MatrixXd::Zero(m, m);
  for (std::size_t p = 0; p < n; ++p) {
    const Graph gc = rewire(contemporaneous, config.rewire_prob, rng);
    const Graph gt = rewire(temporal, config.rewire_prob, rng);

    MatrixXd k;
    bool pd = false;
    for (int attempt = 0; attempt < 100 && !pd; ++attempt) {
      k = -assign_weights(gc, model.contemporaneous_signs, rng, config.weight_mean, config.weight_sd).matrix();
      k.diagonal().setOnes();
      pd = linalg::is_positive_definite(k);
    }
    if (!pd) throw Error(ErrorCode::GenerationFailure, "no positive definite contemporaneous precision in 100 draws");

    MatrixXd b;
    double radius = 0.0;
    for (int attempt = 0; attempt < 100; ++attempt) {
      b = assign_weights(gt, model.temporal_signs, rng, config.weight_mean, config.weight_sd).matrix();
      if (config.temporal_self_loops) b.diagonal().setConstant(config.self_loop_weight);
      radius = linalg::spectral_radius(b);
      if (radius < 1.0) break;
    }
    if (radius >= 1.0) b *= 0.95 / radius;

    model.theta.push_back(linalg::symmetrize(k.inverse()));
    model.contemporaneous.push_back(partial_correlations(PrecisionMatrix{k}));
    model.contemporaneous_fixed += model.contemporaneous.back().partials;
    model.temporal_fixed += b;
    model.kappa.push_back(std::move(k));
    model.beta.push_back(std::move(b));
  }
  model.temporal_fixed /= static_cast<double>(n);
  model.contemporaneous_fixed /= static_cast<double>(n);
  model.mu = draw_mvn(model.omega, static_cast<Eigen::Index>(n), rng);
  return model;
}

PanelData simulate_panel(const TrueModel& model, int occasions, Rng& rng) {
  if (occasions < 1) throw Error(ErrorCode::ConfigInvalid, "occasions must be positive");
  const Eigen::Index m = model.nodes();
  PanelData panel;
  panel.labels = default_labels(m);
  std::normal_distribution<double> z;
  for (std::size_t p = 0; p < model.subjects(); ++p) {
    const MatrixXd& b = model.beta[p];
    const VectorXd mu = model.mu.row(static_cast<Eigen::Index>(p)).transpose();
    const CovMatrix sigma = stationary_covariance(b, model.theta[p]);
    const Eigen::LLT<MatrixXd> start(sigma.values);
    const Eigen::LLT<MatrixXd> noise(model.theta[p]);
    if (start.info() != Eigen::Success || noise.info() != Eigen::Success)
      throw Error(ErrorCode::GenerationFailure, "stationary or residual covariance is not positive definite");
    MatrixXd y(occasions, m);
    VectorXd draw(m);
    for (Eigen::Index j = 0; j < m; ++j) draw(j) = z(rng);
    VectorXd dev = start.matrixL() * draw;
    y.row(0) = (mu + dev).transpose();
    for (int t = 1; t < occasions; ++t) {
      for (Eigen::Index j = 0; j < m; ++j) draw(j) = z(rng);
      dev = b * dev + noise.matrixL() * draw;
      y.row(t) = (mu + dev).transpose();
    }
    panel.ids.push_back(std::to_string(p + 1));
    panel.subjects.push_back(TimeSeries::from_matrix(std::move(y)));
  }
  return panel;
}

std::string_view to_string(NetworkType type) {
  switch (type) {
    case NetworkType::Temporal: return "temporal";
    case NetworkType::Contemporaneous: return "contemporaneous";
    case NetworkType::Between: return "between";
  }
  return "temporal";
}

std::string_view to_string(Level level) { return level == Level::Fixed ? "fixed" : "subject"; }

Metrics score_network(const MatrixXd& truth, const MatrixXd& estimate, bool directed) {
  const Eigen::Index m = truth.rows();
  if (truth.cols() != m || estimate.rows() != m || estimate.cols() != m)
    throw Error(ErrorCode::ShapeMismatch, "true and estimated networks differ in shape");
  std::vector<double> t, e;
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = directed ? 0 : i + 1; j < m; ++j) {
      t.push_back(truth(i, j));
      e.push_back(estimate(i, j));
    }
  long tp = 0, fn = 0, tn = 0, fp = 0;
  double abs_sum = 0.0, sq_sum = 0.0;
  for (std::size_t k = 0; k < t.size(); ++k) {
    const bool in_truth = t[k] != 0.0;
    const bool in_est = e[k] != 0.0;
    if (in_truth) (in_est ? tp : fn)++;
    else (in_est ? fp : tn)++;
    abs_sum += std::abs(t[k] - e[k]);
    sq_sum += (t[k] - e[k]) * (t[k] - e[k]);
  }
  Metrics out;
  out.sensitivity = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : kNaN;
  out.specificity = tn + fp > 0 ? static_cast<double>(tn) / static_cast<double>(tn + fp) : kNaN;
  const auto count = static_cast<double>(t.size());
  out.bias = abs_sum / count;
  out.mse = sq_sum / count;
  out.correlation = linalg::correlation(Eigen::Map<const VectorXd>(t.data(), static_cast<Eigen::Index>(t.size())),
                                        Eigen::Map<const VectorXd>(e.data(), static_cast<Eigen::Index>(e.size())));
  return out;
}

NetworkEstimate estimate_from(const MlVarFit& fit, double alpha, Rule rule, Adjustment adjustment) {
  NetworkEstimate est;
  const BoolMatrix keep = threshold_temporal(fit.temporal_p, alpha, adjustment);
  est.temporal_fixed = keep.select(fit.temporal_fixed, MatrixXd::Zero(fit.temporal_fixed.rows(), fit.temporal_fixed.cols()));
  est.contemporaneous_fixed =
      threshold_rule(fit.contemporaneous_fixed, fit.contemporaneous_p, rule, alpha, adjustment).partials;
  if (fit.between_available) est.between = threshold_rule(fit.between, fit.between_p, rule, alpha, adjustment).partials;
  for (std::size_t p = 0; p < fit.temporal_subject.size(); ++p) {
    const MatrixXd& b = fit.temporal_subject[p];
    if (b.allFinite()) est.temporal_subject.emplace_back(b);
    else est.temporal_subject.emplace_back(std::nullopt);
    const bool has = p < fit.contemporaneous_subject.size() &&
                     (fit.contemporaneous_subject_valid[p] || fit.contemporaneous_subject[p].edge_count() > 0);
    if (has) est.contemporaneous_subject.emplace_back(fit.contemporaneous_subject[p].partials);
    else est.contemporaneous_subject.emplace_back(std::nullopt);
  }
  return est;
}

NetworkEstimate estimate_from(const PooledLassoFit& fit) {
  NetworkEstimate est;
  est.temporal_fixed = fit.pooled.model.beta;
  est.contemporaneous_fixed = fit.pooled.model.contemporaneous.partials;
  if (fit.between) est.between = fit.between->network.partials;
  for (const auto& s : fit.subjects) {
    if (s) {
      est.temporal_subject.emplace_back(s->model.beta);
      est.contemporaneous_subject.emplace_back(s->model.contemporaneous.partials);
    } else {
      est.temporal_subject.emplace_back(std::nullopt);
      est.contemporaneous_subject.emplace_back(std::nullopt);
    }
  }
  return est;
}

std::vector<ScoreRow> score(const TrueModel& truth, const NetworkEstimate& estimate) {
  std::vector<ScoreRow> rows;
  rows.push_back({NetworkType::Temporal, Level::Fixed, score_network(truth.temporal_fixed, estimate.temporal_fixed, true)});
  rows.push_back({NetworkType::Contemporaneous, Level::Fixed,
                  score_network(truth.contemporaneous_fixed, estimate.contemporaneous_fixed, false)});
  if (estimate.between)
    rows.push_back({NetworkType::Between, Level::Fixed, score_network(truth.between.partials, *estimate.between, false)});

  auto subject_level = [&](NetworkType type, const std::vector<std::optional<MatrixXd>>& ests) {
    std::vector<double> sens, spec, corr, bias, mse;
    for (std::size_t p = 0; p < ests.size() && p < truth.subjects(); ++p) {
      if (!ests[p]) continue;
      const bool directed = type == NetworkType::Temporal;
      const MatrixXd& t = directed ? truth.beta[p] : truth.contemporaneous[p].partials;
      const Metrics mt = score_network(t, *ests[p], directed);
      sens.push_back(mt.sensitivity);
      spec.push_back(mt.specificity);
      corr.push_back(mt.correlation);
      bias.push_back(mt.bias);
      mse.push_back(mt.mse);
    }
    if (sens.empty()) return;
    rows.push_back({type, Level::Subject,
                    Metrics{nan_mean(sens), nan_mean(spec), nan_mean(corr), nan_mean(bias), nan_mean(mse)},
                    sens.size()});
  };
  subject_level(NetworkType::Temporal, estimate.temporal_subject);
  subject_level(NetworkType::Contemporaneous, estimate.contemporaneous_subject);
  return rows;
}

}  // namespace mlgvar
