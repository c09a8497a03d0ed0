#include "mlgvar/ggm.hpp"

#include "mlgvar/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace mlgvar {

int GgmNetwork::edge_count() const {
  int count = 0;
  for (Eigen::Index i = 0; i < included.rows(); ++i)
    for (Eigen::Index j = i + 1; j < included.cols(); ++j) count += included(i, j) ? 1 : 0;
  return count;
}

GgmNetwork GgmNetwork::empty(Eigen::Index m, std::vector<std::string> labels) {
  GgmNetwork net;
  net.partials = MatrixXd::Identity(m, m);
  net.included = BoolMatrix::Constant(m, m, false);
  net.labels = labels.empty() ? default_labels(m) : std::move(labels);
  return net;
}

void check_network_invariants(const GgmNetwork& net, double tol) {
  const Eigen::Index m = net.partials.rows();
  auto fail = [](const std::string& what) { throw Error(ErrorCode::ShapeMismatch, what); };
  if (net.partials.cols() != m || net.included.rows() != m || net.included.cols() != m)
    fail("network matrices are not square or differ in size");
  if (static_cast<Eigen::Index>(net.labels.size()) != m) fail("label count does not match node count");
  for (Eigen::Index i = 0; i < m; ++i) {
    if (std::abs(net.partials(i, i) - 1.0) > tol) fail("partials diagonal is not 1");
    if (net.included(i, i)) fail("diagonal of inclusion mask is set");
    for (Eigen::Index j = 0; j < m; ++j) {
      if (i == j) continue;
      if (std::abs(net.partials(i, j) - net.partials(j, i)) > tol) fail("partials not symmetric");
      if (net.included(i, j) != net.included(j, i)) fail("inclusion mask not symmetric");
      if (std::abs(net.partials(i, j)) > 1.0 + tol) fail("partial correlation outside [-1, 1]");
      if (!net.included(i, j) && net.partials(i, j) != 0.0) fail("excluded edge has nonzero weight");
    }
  }
}

std::vector<std::string> default_labels(Eigen::Index m) {
  std::vector<std::string> labels;
  labels.reserve(static_cast<std::size_t>(m));
  for (Eigen::Index i = 0; i < m; ++i) labels.push_back("V" + std::to_string(i + 1));
  return labels;
}

CovMatrix sample_covariance(const MatrixXd& data, Denominator denominator) {
  const Eigen::Index n = data.rows();
  if (n < 2) throw Error(ErrorCode::InsufficientData, "sample covariance needs at least 2 rows");
  const MatrixXd centered = data.rowwise() - data.colwise().mean();
  const double denom = denominator == Denominator::N ? static_cast<double>(n) : static_cast<double>(n - 1);
  CovMatrix cov;
  cov.values = linalg::symmetrize(centered.transpose() * centered / denom);
  cov.n = static_cast<long>(n);
  return cov;
}

PrecisionMatrix precision_from_covariance(const CovMatrix& sigma, double condition_cap) {
  const MatrixXd& s = sigma.values;
  if (s.rows() != s.cols()) throw Error(ErrorCode::ShapeMismatch, "covariance must be square");
  if (s.rows() == 0) return {MatrixXd(0, 0)};
  const double cond = linalg::condition_number_sym(s);
  if (!(cond <= condition_cap)) {
    throw Error(ErrorCode::SingularCovariance,
                "covariance is singular or ill-conditioned (condition number " + std::to_string(cond) + ")");
  }
  Eigen::LDLT<MatrixXd> ldlt(s);
  if (ldlt.info() != Eigen::Success)
    throw Error(ErrorCode::SingularCovariance, "covariance factorization failed");
  const MatrixXd k = ldlt.solve(MatrixXd::Identity(s.rows(), s.cols()));
  return {linalg::symmetrize(k)};
}

GgmNetwork partial_correlations(const PrecisionMatrix& k, std::vector<std::string> labels) {
  const MatrixXd& kv = k.values;
  const Eigen::Index m = kv.rows();
  if (kv.cols() != m) throw Error(ErrorCode::ShapeMismatch, "precision must be square");
  if (!labels.empty() && static_cast<Eigen::Index>(labels.size()) != m)
    throw Error(ErrorCode::ShapeMismatch, "label count does not match precision size");
  for (Eigen::Index i = 0; i < m; ++i) {
    if (!(kv(i, i) > 0.0)) throw Error(ErrorCode::InvalidPrecision, "precision diagonal must be positive");
  }
  GgmNetwork net = GgmNetwork::empty(m, std::move(labels));
  const VectorXd inv_sd = kv.diagonal().array().sqrt().inverse();
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = i + 1; j < m; ++j) {
      const double kij = 0.5 * (kv(i, j) + kv(j, i));
      const double r = std::clamp(-kij * inv_sd(i) * inv_sd(j), -1.0, 1.0);
      net.partials(i, j) = net.partials(j, i) = r;
      net.included(i, j) = net.included(j, i) = std::abs(r) > 0.0;
    }
  }
  return net;
}

RegressionPrecision regression_to_precision(const NodewiseRegression& reg) {
  const Eigen::Index m = reg.gamma.rows();
  if (reg.gamma.cols() != m || reg.residual_variances.size() != m)
    throw Error(ErrorCode::ShapeMismatch, "nodewise regression shapes disagree");
  if ((reg.residual_variances.array() <= 0.0).any())
    throw Error(ErrorCode::InvalidPrecision, "residual variances must be positive");
  MatrixXd gamma = reg.gamma;
  gamma.diagonal().setZero();
  const VectorXd d = reg.residual_variances.array().inverse();
  const MatrixXd k = d.asDiagonal() * (MatrixXd::Identity(m, m) - gamma);
  RegressionPrecision out;
  out.max_asymmetry = linalg::max_asymmetry(k);
  out.precision.values = linalg::symmetrize(k);
  return out;
}

NodewiseRegression nodewise_ols(const MatrixXd& data, Denominator denominator) {
  const Eigen::Index n = data.rows();
  const Eigen::Index m = data.cols();
  if (n <= m) throw Error(ErrorCode::InsufficientData, "nodewise regression needs more rows than variables");
  NodewiseRegression reg;
  reg.gamma = MatrixXd::Zero(m, m);
  reg.intercepts = VectorXd::Zero(m);
  reg.residual_variances = VectorXd::Zero(m);
  const double denom = denominator == Denominator::N ? static_cast<double>(n) : static_cast<double>(n - 1);
  for (Eigen::Index i = 0; i < m; ++i) {
    MatrixXd x(n, m);
    x.col(0).setOnes();
    Eigen::Index c = 1;
    for (Eigen::Index j = 0; j < m; ++j)
      if (j != i) x.col(c++) = data.col(j);
    const Eigen::ColPivHouseholderQR<MatrixXd> qr(x);
    if (qr.rank() < m) throw Error(ErrorCode::SingularDesign, "nodewise design is rank deficient");
    const VectorXd coef = qr.solve(data.col(i));
    reg.intercepts(i) = coef(0);
    c = 1;
    for (Eigen::Index j = 0; j < m; ++j)
      if (j != i) reg.gamma(i, j) = coef(c++);
    const VectorXd resid = data.col(i) - x * coef;
    reg.residual_variances(i) = resid.squaredNorm() / denom;
  }
  return reg;
}

int offdiag_nonzeros(const MatrixXd& k) {
  int e = 0;
  for (Eigen::Index i = 0; i < k.rows(); ++i)
    for (Eigen::Index j = i + 1; j < k.cols(); ++j) e += k(i, j) != 0.0 ? 1 : 0;
  return e;
}

double gaussian_loglik(const MatrixXd& k, const MatrixXd& s, double n) {
  return 0.5 * n * (linalg::log_det_spd(k) - (s * k).trace());
}

double ebic(const PrecisionMatrix& k, const CovMatrix& s, double n, double gamma) {
  const double m = static_cast<double>(k.dim());
  const double e = offdiag_nonzeros(k.values);
  return -2.0 * gaussian_loglik(k.values, s.values, n) + e * std::log(n) + 4.0 * e * gamma * std::log(m);
}

std::vector<double> log_spaced_grid(double max, double min_ratio, int count) {
  std::vector<double> grid;
  if (count <= 0) return grid;
  if (count == 1 || max <= 0.0) return {std::max(max, 0.0)};
  const double lo = std::log(max * min_ratio);
  const double hi = std::log(max);
  grid.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    grid.push_back(std::exp(hi + (lo - hi) * static_cast<double>(i) / static_cast<double>(count - 1)));
  }
  grid.front() = max;
  return grid;
}

EbicGlassoResult ebic_glasso(const CovMatrix& s, const EbicGlassoOptions& options,
                             std::vector<std::string> labels) {
  const Eigen::Index m = s.dim();
  EbicGlassoResult result;
  if (!options.rho_grid.empty()) {
    result.rho_grid = options.rho_grid;
    std::sort(result.rho_grid.begin(), result.rho_grid.end(), std::greater<>());
  } else {
    double lambda_max = 0.0;
    for (Eigen::Index i = 0; i < m; ++i)
      for (Eigen::Index j = i + 1; j < m; ++j) lambda_max = std::max(lambda_max, std::abs(s.values(i, j)));
    if (lambda_max == 0.0) lambda_max = 1.0;
    result.rho_grid = log_spaced_grid(lambda_max, options.min_ratio, options.grid_size);
  }
  if (result.rho_grid.empty()) throw Error(ErrorCode::ConfigInvalid, "rho grid is empty");
  const double n = static_cast<double>(s.n);

  std::optional<GlassoFit> previous;
  std::optional<GlassoFit> best;
  double best_score = std::numeric_limits<double>::infinity();
  for (std::size_t g = 0; g < result.rho_grid.size(); ++g) {
    const double rho = result.rho_grid[g];
    try {
      GlassoFit fit = glasso(s, rho, options.glasso, previous ? &*previous : nullptr);
      const double score = ebic(fit.precision, s, n, options.gamma);
      result.scores.push_back(score);
      result.edge_counts.push_back(offdiag_nonzeros(fit.precision.values));
      // Descending rho: strict improvement keeps ties on the sparser side.
      if (score < best_score) {
        best_score = score;
        best = fit;
        result.selected = g;
      }
      previous = std::move(fit);
    } catch (const Error&) {
      result.scores.push_back(std::numeric_limits<double>::quiet_NaN());
      result.edge_counts.push_back(-1);
      previous.reset();
    }
  }
  if (!best) {
    throw ConvergenceError("graphical lasso failed at every grid value", MatrixXd());
  }
  result.rho = result.rho_grid[result.selected];
  result.precision = best->precision;
  result.network = partial_correlations(best->precision, std::move(labels));
  return result;
}

double partial_correlation_pvalue(double r, double dof) {
  if (r == 0.0) return 1.0;
  const double rc = std::clamp(r, -1.0 + 1e-15, 1.0 - 1e-15);
  return linalg::two_sided_normal_p(std::atanh(rc) * std::sqrt(dof));
}

GgmNetwork threshold_significance(const GgmNetwork& r, long n, double alpha, std::optional<double> dof) {
  const Eigen::Index m = r.dim();
  if (n <= m + 1) throw Error(ErrorCode::InsufficientData, "significance test needs n > m + 1");
  const double df = dof.value_or(static_cast<double>(n - m - 1));
  GgmNetwork out = r;
  if (alpha >= 1.0) return out;
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = i + 1; j < m; ++j) {
      if (!out.included(i, j)) continue;
      if (partial_correlation_pvalue(out.partials(i, j), df) >= alpha) {
        out.included(i, j) = out.included(j, i) = false;
        out.partials(i, j) = out.partials(j, i) = 0.0;
      }
    }
  }
  return out;
}

}  // namespace mlgvar
