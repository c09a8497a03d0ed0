// Blockwise coordinate descent graphical lasso. The diagonal is unpenalized,
// so W_ii = S_ii throughout and only the off-diagonal blocks move.

#include "mlgvar/error.hpp"
#include "mlgvar/ggm.hpp"

#include <algorithm>
#include <cmath>

namespace mlgvar {
namespace {

double soft_threshold(double x, double t) {
  if (x > t) return x - t;
  if (x < -t) return x + t;
  return 0.0;
}

// Lasso subproblem min 1/2 b'W11 b - s12'b + rho |b|_1 by cyclic coordinate
// descent. `wb` tracks W11 b.
bool lasso_block(const MatrixXd& w11, const VectorXd& s12, double rho, VectorXd& beta, VectorXd& wb,
                 int max_sweeps, double tol) {
  const Eigen::Index p = beta.size();
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double max_change = 0.0;
    for (Eigen::Index k = 0; k < p; ++k) {
      const double old = beta(k);
      const double partial = s12(k) - (wb(k) - w11(k, k) * old);
      const double updated = soft_threshold(partial, rho) / w11(k, k);
      if (updated != old) {
        const double delta = updated - old;
        wb.noalias() += delta * w11.col(k);
        beta(k) = updated;
        max_change = std::max(max_change, std::abs(delta) * w11(k, k));
      }
    }
    if (max_change < tol) return true;
  }
  return false;
}

}  // namespace

GlassoFit glasso(const CovMatrix& s, double rho, const GlassoOptions& options, const GlassoFit* warm) {
  const MatrixXd& sv = s.values;
  const Eigen::Index m = sv.rows();
  if (sv.cols() != m) throw Error(ErrorCode::ShapeMismatch, "covariance must be square");
  if (rho < 0.0) throw Error(ErrorCode::ConfigInvalid, "glasso penalty must be nonnegative");
  if ((sv.diagonal().array() <= 0.0).any())
    throw Error(ErrorCode::SingularCovariance, "covariance diagonal must be positive");

  GlassoFit fit;
  if (m == 1) {
    fit.covariance = sv;
    fit.precision.values = sv.cwiseInverse();
    return fit;
  }

  // coef.col(j) holds the regression of column j on the others (zero at j).
  MatrixXd w;
  MatrixXd coef = MatrixXd::Zero(m, m);
  if (warm != nullptr && warm->covariance.rows() == m) {
    w = warm->covariance;
    w.diagonal() = sv.diagonal();
    const MatrixXd& k = warm->precision.values;
    for (Eigen::Index j = 0; j < m; ++j)
      for (Eigen::Index i = 0; i < m; ++i)
        if (i != j) coef(i, j) = -k(i, j) / k(j, j);
  } else {
    w = sv;
    // With every off-diagonal screened out the solution is diagonal at once.
    w.triangularView<Eigen::StrictlyUpper>().setZero();
    w.triangularView<Eigen::StrictlyLower>().setZero();
    bool all_screened = true;
    for (Eigen::Index i = 0; i < m && all_screened; ++i)
      for (Eigen::Index j = i + 1; j < m; ++j)
        if (std::abs(sv(i, j)) > rho) {
          all_screened = false;
          break;
        }
    if (!all_screened) w = sv;
  }

  const double scale = std::max(sv.diagonal().maxCoeff(), 1e-300);
  const double tol = options.tolerance * scale;
  MatrixXd w11(m - 1, m - 1);
  VectorXd s12(m - 1), beta(m - 1), wb(m - 1);
  std::vector<Eigen::Index> others(static_cast<std::size_t>(m - 1));

  bool converged = false;
  int iter = 0;
  for (; iter < options.max_iterations; ++iter) {
    double max_change = 0.0;
    for (Eigen::Index j = 0; j < m; ++j) {
      Eigen::Index c = 0;
      for (Eigen::Index i = 0; i < m; ++i)
        if (i != j) others[static_cast<std::size_t>(c++)] = i;
      for (Eigen::Index a = 0; a < m - 1; ++a) {
        s12(a) = sv(others[a], j);
        beta(a) = coef(others[a], j);
        for (Eigen::Index b = 0; b < m - 1; ++b) w11(a, b) = w(others[a], others[b]);
      }
      wb.noalias() = w11 * beta;
      lasso_block(w11, s12, rho, beta, wb, options.max_inner_iterations, 0.1 * tol);
      for (Eigen::Index a = 0; a < m - 1; ++a) {
        const Eigen::Index i = others[a];
        coef(i, j) = beta(a);
        max_change = std::max(max_change, std::abs(w(i, j) - wb(a)));
        w(i, j) = wb(a);
        w(j, i) = wb(a);
      }
    }
    if (max_change < tol) {
      converged = true;
      ++iter;
      break;
    }
  }

  MatrixXd k = MatrixXd::Zero(m, m);
  for (Eigen::Index j = 0; j < m; ++j) {
    double quad = 0.0;
    for (Eigen::Index i = 0; i < m; ++i)
      if (i != j) quad += w(i, j) * coef(i, j);
    const double kjj = 1.0 / (w(j, j) - quad);
    k(j, j) = kjj;
    for (Eigen::Index i = 0; i < m; ++i)
      if (i != j) k(i, j) = -coef(i, j) * kjj;
  }
  // Average the two estimates of each entry; an exact zero on either side wins
  // so the support stays symmetric.
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = i + 1; j < m; ++j) {
      const double v = (k(i, j) == 0.0 || k(j, i) == 0.0) ? 0.0 : 0.5 * (k(i, j) + k(j, i));
      k(i, j) = k(j, i) = v;
    }
  }
  if (!converged || !linalg::is_positive_definite(k)) {
    throw ConvergenceError("graphical lasso did not converge (rho=" + std::to_string(rho) + ")", k);
  }
  fit.precision.values = std::move(k);
  fit.covariance = std::move(w);
  fit.iterations = iter;
  return fit;
}

double glasso_kkt_residual(const MatrixXd& s, const MatrixXd& k, double rho) {
  const MatrixXd w = k.ldlt().solve(MatrixXd::Identity(k.rows(), k.cols()));
  double worst = 0.0;
  for (Eigen::Index i = 0; i < k.rows(); ++i) {
    worst = std::max(worst, std::abs(w(i, i) - s(i, i)));
    for (Eigen::Index j = 0; j < k.cols(); ++j) {
      if (i == j) continue;
      const double g = w(i, j) - s(i, j);
      const double violation =
          k(i, j) == 0.0 ? std::max(0.0, std::abs(g) - rho) : std::abs(g - rho * (k(i, j) > 0 ? 1.0 : -1.0));
      worst = std::max(worst, violation);
    }
  }
  return worst;
}

}  // namespace mlgvar
