#include "mlgvar/mlvar.hpp"

#include "mlgvar/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace mlgvar {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<std::string> labels_or_default(std::vector<std::string> labels, Eigen::Index m) {
  if (static_cast<Eigen::Index>(labels.size()) != m) return default_labels(m);
  return labels;
}

// Symmetric network from nodewise standardized coefficients r(i, j).
GgmNetwork average_network(const MatrixXd& r, std::vector<std::string> labels) {
  const Eigen::Index m = r.rows();
  GgmNetwork net = GgmNetwork::empty(m, std::move(labels));
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = i + 1; j < m; ++j) {
      double v = 0.5 * (r(i, j) + r(j, i));
      if (!std::isfinite(v)) v = 0.0;
      v = std::clamp(v, -1.0, 1.0);
      net.partials(i, j) = net.partials(j, i) = v;
      net.included(i, j) = net.included(j, i) = v != 0.0;
    }
  }
  return net;
}

// Unit diagonal, negated partials: PD exactly when the implied precision is.
bool partials_pd(const GgmNetwork& net) {
  MatrixXd k = -net.partials;
  k.diagonal().setOnes();
  return linalg::is_positive_definite(k);
}

}  // namespace

void check_panel(const PanelData& panel) {
  if (panel.subjects.empty()) throw Error(ErrorCode::InsufficientData, "panel has no subjects");
  const Eigen::Index m = panel.variables();
  for (const auto& s : panel.subjects)
    if (s.variables() != m) throw Error(ErrorCode::ShapeMismatch, "subjects disagree on the number of variables");
  if (panel.ids.size() != panel.subjects.size())
    throw Error(ErrorCode::ShapeMismatch, "panel ids and subjects differ in length");
  if (!panel.labels.empty() && static_cast<Eigen::Index>(panel.labels.size()) != m)
    throw Error(ErrorCode::ShapeMismatch, "panel labels do not match the number of variables");
}

CenteredPanel within_center(const PanelData& panel) {
  check_panel(panel);
  const Eigen::Index m = panel.variables();
  CenteredPanel out;
  out.centered = panel;
  out.subject_means.resize(static_cast<Eigen::Index>(panel.size()), m);
  for (std::size_t p = 0; p < panel.size(); ++p) {
    TimeSeries& s = out.centered.subjects[p];
    for (Eigen::Index j = 0; j < m; ++j) {
      double sum = 0.0;
      long count = 0;
      for (Eigen::Index t = 0; t < s.occasions(); ++t) {
        if (s.missing(t, j)) continue;
        sum += s.values(t, j);
        ++count;
      }
      if (count == 0)
        throw Error(ErrorCode::InsufficientData, "subject '" + panel.ids[p] + "' has no observations of variable " +
                                                     std::to_string(j));
      const double mean = sum / static_cast<double>(count);
      out.subject_means(static_cast<Eigen::Index>(p), j) = mean;
      for (Eigen::Index t = 0; t < s.occasions(); ++t)
        if (!s.missing(t, j)) s.values(t, j) -= mean;
    }
  }
  return out;
}

Rule parse_rule(std::string_view text) {
  if (text == "and") return Rule::And;
  if (text == "or") return Rule::Or;
  throw Error(ErrorCode::ConfigInvalid, "rule must be 'and' or 'or'");
}

std::string_view to_string(Rule rule) { return rule == Rule::And ? "and" : "or"; }

Adjustment parse_adjustment(std::string_view text) {
  if (text == "none") return Adjustment::None;
  if (text == "bonferroni") return Adjustment::Bonferroni;
  if (text == "holm") return Adjustment::Holm;
  throw Error(ErrorCode::ConfigInvalid, "adjustment must be none, bonferroni or holm");
}

std::string_view to_string(Adjustment adjustment) {
  switch (adjustment) {
    case Adjustment::None: return "none";
    case Adjustment::Bonferroni: return "bonferroni";
    case Adjustment::Holm: return "holm";
  }
  return "none";
}

MatrixXd adjust_pvalues(const MatrixXd& pvalues, Adjustment adjustment, bool skip_diagonal) {
  if (adjustment == Adjustment::None) return pvalues;
  std::vector<std::pair<Eigen::Index, Eigen::Index>> cells;
  for (Eigen::Index j = 0; j < pvalues.cols(); ++j)
    for (Eigen::Index i = 0; i < pvalues.rows(); ++i)
      if (!(skip_diagonal && i == j) && std::isfinite(pvalues(i, j))) cells.emplace_back(i, j);
  MatrixXd out = pvalues;
  const auto count = static_cast<double>(cells.size());
  if (adjustment == Adjustment::Bonferroni) {
    for (auto [i, j] : cells) out(i, j) = std::min(1.0, pvalues(i, j) * count);
    return out;
  }
  std::stable_sort(cells.begin(), cells.end(),
                   [&](const auto& a, const auto& b) { return pvalues(a.first, a.second) < pvalues(b.first, b.second); });
  double running = 0.0;
  for (std::size_t k = 0; k < cells.size(); ++k) {
    const auto [i, j] = cells[k];
    running = std::max(running, std::min(1.0, (count - static_cast<double>(k)) * pvalues(i, j)));
    out(i, j) = running;
  }
  return out;
}

GgmNetwork threshold_rule(const GgmNetwork& network, const MatrixXd& pvalues, Rule rule, double alpha,
                          Adjustment adjustment) {
  const Eigen::Index m = network.dim();
  if (pvalues.rows() != m || pvalues.cols() != m)
    throw Error(ErrorCode::ShapeMismatch, "p-value matrix does not match the network");
  const MatrixXd p = adjust_pvalues(pvalues, adjustment, true);
  GgmNetwork out = network;
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = i + 1; j < m; ++j) {
      const bool a = p(i, j) < alpha;
      const bool b = p(j, i) < alpha;
      const bool keep = rule == Rule::And ? (a && b) : (a || b);
      if (!keep) {
        out.partials(i, j) = out.partials(j, i) = 0.0;
        out.included(i, j) = out.included(j, i) = false;
      }
    }
  }
  return out;
}

BoolMatrix threshold_temporal(const MatrixXd& pvalues, double alpha, Adjustment adjustment) {
  const MatrixXd p = adjust_pvalues(pvalues, adjustment, false);
  return p.array() < alpha;
}

GgmNetwork between_network(const MatrixXd& b_mu, const VectorXd& residual_variances, std::vector<std::string> labels) {
  const Eigen::Index m = b_mu.rows();
  if (b_mu.cols() != m || residual_variances.size() != m)
    throw Error(ErrorCode::ShapeMismatch, "between coefficients and variances disagree in size");
  if ((residual_variances.array() <= 0.0).any())
    throw Error(ErrorCode::InvalidPrecision, "between residual variances must be positive");
  const VectorXd sd = residual_variances.cwiseSqrt();
  MatrixXd r = MatrixXd::Zero(m, m);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < m; ++j)
      if (i != j) r(i, j) = b_mu(i, j) * sd(j) / sd(i);
  return average_network(r, labels_or_default(std::move(labels), m));
}

Step1Result mlvar_step1(const PanelData& panel, const CenteredPanel& centered, RandomSpec random,
                        const MlVarOptions& options) {
  check_panel(panel);
  const Eigen::Index m = panel.variables();
  const std::size_t np = panel.size();

  // Pool the lagged rows of all subjects; predictors are lagged values minus
  // the subject mean, responses stay on the raw scale so the random intercept
  // carries the subject mean.
  std::vector<LaggedDesign> designs(np);
  std::vector<bool> usable(np, false);
  Eigen::Index total = 0;
  for (std::size_t p = 0; p < np; ++p) {
    try {
      designs[p] = build_lagged_design(panel.subjects[p], options.day_policy);
      usable[p] = true;
      total += designs[p].rows();
    } catch (const Error& e) {
      if (e.code() != ErrorCode::InsufficientData) throw;
    }
  }
  const long n_usable = std::count(usable.begin(), usable.end(), true);
  if (n_usable == 0) throw Error(ErrorCode::InsufficientData, "no subject has usable lagged pairs");

  const bool with_between = n_usable >= 2 && m >= 2;
  MatrixXd y(total, m), xw(total, m), means(total, m);
  std::vector<int> groups(static_cast<std::size_t>(total));
  Eigen::Index row = 0;
  for (std::size_t p = 0; p < np; ++p) {
    if (!usable[p]) continue;
    const Eigen::Index rows = designs[p].rows();
    const VectorXd mu = centered.subject_means.row(static_cast<Eigen::Index>(p)).transpose();
    y.middleRows(row, rows) = designs[p].current;
    xw.middleRows(row, rows) = designs[p].lagged.rowwise() - mu.transpose();
    means.middleRows(row, rows) = mu.transpose().replicate(rows, 1);
    std::fill(groups.begin() + row, groups.begin() + row + rows, static_cast<int>(p));
    row += rows;
  }

  Step1Result out;
  out.temporal_fixed = MatrixXd::Constant(m, m, kNaN);
  out.temporal_se = MatrixXd::Constant(m, m, kNaN);
  out.temporal_p = MatrixXd::Constant(m, m, kNaN);
  out.temporal_sd = MatrixXd::Zero(m, m);
  out.temporal_subject.assign(np, MatrixXd::Constant(m, m, kNaN));
  out.between_coef = MatrixXd::Zero(m, m);
  out.between_p = MatrixXd::Constant(m, m, kNaN);
  out.mean_variances = VectorXd::Constant(m, kNaN);
  out.between_available = with_between;
  out.residuals.resize(np);
  for (std::size_t p = 0; p < np; ++p)
    out.residuals[p] = usable[p] ? MatrixXd(designs[p].rows(), m) : MatrixXd(0, m);

  for (Eigen::Index i = 0; i < m; ++i) {
    MatrixXd xb(total, with_between ? m - 1 : 0);
    if (with_between) {
      Eigen::Index c = 0;
      for (Eigen::Index j = 0; j < m; ++j)
        if (j != i) xb.col(c++) = means.col(j);
    }
    VectorXd resid;
    try {
      const LmmFit fit = fit_lmm_reml(y.col(i), xw, xb, groups, random, options.lmm);
      out.temporal_fixed.row(i) = fit.fixed.segment(1, m).transpose();
      out.temporal_se.row(i) = fit.fixed_se.segment(1, m).transpose();
      out.temporal_p.row(i) = fit.fixed_p.segment(1, m).transpose();
      out.temporal_sd.row(i) = fit.random_cov.diagonal().segment(1, m).cwiseMax(0.0).cwiseSqrt().transpose();
      for (std::size_t g = 0; g < fit.group_labels.size(); ++g) {
        const auto p = static_cast<std::size_t>(fit.group_labels[g]);
        out.temporal_subject[p].row(i) =
            (fit.fixed.segment(1, m) + fit.blups.row(static_cast<Eigen::Index>(g)).segment(1, m).transpose())
                .transpose();
      }
      if (with_between) {
        Eigen::Index c = 0;
        for (Eigen::Index j = 0; j < m; ++j) {
          if (j == i) continue;
          out.between_coef(i, j) = fit.fixed(1 + m + c);
          out.between_p(i, j) = fit.fixed_p(1 + m + c);
          ++c;
        }
        out.mean_variances(i) = fit.random_cov(0, 0);
      }
      resid = fit.residuals;
      // Unique fits leave excluded subjects without residuals; fall back to the
      // centered response there.
      for (Eigen::Index r = 0; r < total; ++r)
        if (!std::isfinite(resid(r))) resid(r) = y(r, i) - means(r, i);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::ConfigInvalid) throw;
      out.node_errors.push_back(panel.labels.empty() ? std::to_string(i) : panel.labels[static_cast<std::size_t>(i)]);
      out.node_errors.back() += ": " + std::string(e.what());
      resid = y.col(i) - means.col(i);
    }
    row = 0;
    for (std::size_t p = 0; p < np; ++p) {
      if (!usable[p]) continue;
      out.residuals[p].col(i) = resid.segment(row, designs[p].rows());
      row += designs[p].rows();
    }
  }
  if (with_between && !(out.mean_variances.array() > 0.0).all()) out.between_available = false;
  return out;
}

Step2Result mlvar_step2(std::span<const MatrixXd> residuals, RandomSpec random, const MlVarOptions& options,
                        std::vector<std::string> labels) {
  if (residuals.empty()) throw Error(ErrorCode::InsufficientData, "no residuals for the contemporaneous step");
  const Eigen::Index m = residuals.front().cols();
  labels = labels_or_default(std::move(labels), m);
  Eigen::Index total = 0;
  for (const auto& r : residuals) total += r.rows();
  if (total == 0) throw Error(ErrorCode::InsufficientData, "no residual rows for the contemporaneous step");

  MatrixXd e(total, m);
  std::vector<int> groups(static_cast<std::size_t>(total));
  Eigen::Index row = 0;
  for (std::size_t p = 0; p < residuals.size(); ++p) {
    e.middleRows(row, residuals[p].rows()) = residuals[p];
    std::fill(groups.begin() + row, groups.begin() + row + residuals[p].rows(), static_cast<int>(p));
    row += residuals[p].rows();
  }

  const std::size_t np = residuals.size();
  MatrixXd gamma = MatrixXd::Zero(m, m);
  MatrixXd gamma_sd = MatrixXd::Zero(m, m);
  std::vector<MatrixXd> gamma_subject(np, MatrixXd::Zero(m, m));
  MatrixXd sigma2_subject = MatrixXd::Constant(static_cast<Eigen::Index>(np), m, kNaN);

  Step2Result out;
  out.contemporaneous_p = MatrixXd::Constant(m, m, kNaN);
  out.residual_variances = VectorXd::Constant(m, kNaN);
  const MatrixXd none(total, 0);
  for (Eigen::Index i = 0; i < m; ++i) {
    MatrixXd x(total, m - 1);
    Eigen::Index c = 0;
    for (Eigen::Index j = 0; j < m; ++j)
      if (j != i) x.col(c++) = e.col(j);
    try {
      const LmmFit fit = fit_lmm_reml(e.col(i), x, none, groups, random, options.lmm);
      out.residual_variances(i) = fit.residual_variance;
      c = 0;
      for (Eigen::Index j = 0; j < m; ++j) {
        if (j == i) continue;
        gamma(i, j) = fit.fixed(1 + c);
        out.contemporaneous_p(i, j) = fit.fixed_p(1 + c);
        gamma_sd(i, j) = std::sqrt(std::max(fit.random_cov(1 + c, 1 + c), 0.0));
        ++c;
      }
      for (std::size_t g = 0; g < fit.group_labels.size(); ++g) {
        const auto p = static_cast<std::size_t>(fit.group_labels[g]);
        const auto gi = static_cast<Eigen::Index>(g);
        sigma2_subject(static_cast<Eigen::Index>(p), i) = fit.group_residual_variance(gi);
        c = 0;
        for (Eigen::Index j = 0; j < m; ++j) {
          if (j == i) continue;
          gamma_subject[p](i, j) = fit.fixed(1 + c) + fit.blups(gi, 1 + c);
          ++c;
        }
      }
    } catch (const Error& err) {
      if (err.code() == ErrorCode::ConfigInvalid) throw;
      out.node_errors.push_back(labels[static_cast<std::size_t>(i)] + ": " + err.what());
    }
  }

  auto standardized = [m](const MatrixXd& g, const VectorXd& s2) {
    MatrixXd r = MatrixXd::Zero(m, m);
    for (Eigen::Index i = 0; i < m; ++i)
      for (Eigen::Index j = 0; j < m; ++j)
        if (i != j) r(i, j) = g(i, j) * std::sqrt(s2(j) / s2(i));
    return r;
  };
  out.contemporaneous_fixed = average_network(standardized(gamma, out.residual_variances), labels);
  out.contemporaneous_sd = average_network(standardized(gamma_sd, out.residual_variances), labels).partials.cwiseAbs();
  out.contemporaneous_sd.diagonal().setZero();
  for (std::size_t p = 0; p < np; ++p) {
    const VectorXd s2 = sigma2_subject.row(static_cast<Eigen::Index>(p)).transpose();
    if (!(s2.array() > 0.0).all()) {
      out.contemporaneous_subject.push_back(GgmNetwork::empty(m, labels));
      out.contemporaneous_subject_valid.push_back(false);
      continue;
    }
    GgmNetwork net = average_network(standardized(gamma_subject[p], s2), labels);
    out.contemporaneous_subject_valid.push_back(partials_pd(net));
    out.contemporaneous_subject.push_back(std::move(net));
  }
  return out;
}

MlVarFit fit_mlvar(const PanelData& panel, const MlVarOptions& options) {
  check_panel(panel);
  const Eigen::Index m = panel.variables();
  const auto labels = labels_or_default(panel.labels, m);
  const CenteredPanel centered = within_center(panel);
  Step1Result s1 = mlvar_step1(panel, centered, options.temporal_random, options);

  std::vector<MatrixXd> resid;
  for (const auto& r : s1.residuals)
    if (r.rows() > 0) resid.push_back(r);
  Step2Result s2 = mlvar_step2(resid, options.contemporaneous_random, options, labels);

  MlVarFit fit;
  fit.labels = labels;
  fit.subject_ids = panel.ids;
  fit.temporal_fixed = std::move(s1.temporal_fixed);
  fit.temporal_se = std::move(s1.temporal_se);
  fit.temporal_p = std::move(s1.temporal_p);
  fit.temporal_sd = std::move(s1.temporal_sd);
  fit.temporal_subject = std::move(s1.temporal_subject);

  fit.contemporaneous_fixed = std::move(s2.contemporaneous_fixed);
  fit.contemporaneous_p = std::move(s2.contemporaneous_p);
  fit.contemporaneous_sd = std::move(s2.contemporaneous_sd);
  // Subjects without lagged rows get no contemporaneous estimate.
  std::size_t k = 0;
  for (const auto& r : s1.residuals) {
    if (r.rows() > 0) {
      fit.contemporaneous_subject.push_back(std::move(s2.contemporaneous_subject[k]));
      fit.contemporaneous_subject_valid.push_back(s2.contemporaneous_subject_valid[k]);
      ++k;
    } else {
      fit.contemporaneous_subject.push_back(GgmNetwork::empty(m, labels));
      fit.contemporaneous_subject_valid.push_back(false);
    }
  }
  fit.residual_variances = std::move(s2.residual_variances);

  fit.between_available = s1.between_available;
  fit.between = fit.between_available ? between_network(s1.between_coef, s1.mean_variances, labels)
                                      : GgmNetwork::empty(m, labels);
  fit.between_p = std::move(s1.between_p);
  fit.subject_means = centered.subject_means;
  fit.node_errors = std::move(s1.node_errors);
  for (auto& e : s2.node_errors) fit.node_errors.push_back("contemporaneous " + e);
  return fit;
}

}  // namespace mlgvar
