#pragma once

// Gaussian graphical models: covariance/precision algebra, the graphical
// lasso, EBIC model selection and significance thresholding of partial
// correlation networks.

#include "mlgvar/linalg.hpp"

#include <optional>
#include <string>
#include <vector>

namespace mlgvar {

enum class Denominator { NMinusOne, N };

struct CovMatrix {
  MatrixXd values;
  long n = 0;  // number of rows the matrix was formed from

  Eigen::Index dim() const { return values.rows(); }
};

struct PrecisionMatrix {
  MatrixXd values;

  Eigen::Index dim() const { return values.rows(); }
};

/// Undirected partial-correlation network.
///
/// Invariants: both matrices symmetric, unit diagonal in `partials`,
/// `included(i, j) == false` implies `partials(i, j) == 0`, and the diagonal of
/// `included` is false.
struct GgmNetwork {
  MatrixXd partials;
  BoolMatrix included;
  std::vector<std::string> labels;

  Eigen::Index dim() const { return partials.rows(); }
  int edge_count() const;
  /// An m-node network with no edges.
  static GgmNetwork empty(Eigen::Index m, std::vector<std::string> labels = {});
};

/// Throws ShapeMismatch (with `what`) when `net` violates a GgmNetwork invariant.
void check_network_invariants(const GgmNetwork& net, double tol = 1e-10);

/// Nodewise regressions y_i = tau_i + gamma_i * y_-i + e_i.
struct NodewiseRegression {
  MatrixXd gamma;  // zero diagonal; row i holds predictors of node i
  VectorXd intercepts;
  VectorXd residual_variances;
};

std::vector<std::string> default_labels(Eigen::Index m);

CovMatrix sample_covariance(const MatrixXd& data, Denominator denominator = Denominator::NMinusOne);

/// K = Sigma^-1. Throws SingularCovariance when the condition number exceeds
/// `condition_cap`.
PrecisionMatrix precision_from_covariance(const CovMatrix& sigma, double condition_cap = 1e12);

/// r_ij = -k_ij / sqrt(k_ii k_jj). Throws InvalidPrecision for a nonpositive
/// diagonal.
GgmNetwork partial_correlations(const PrecisionMatrix& k, std::vector<std::string> labels = {});

struct RegressionPrecision {
  PrecisionMatrix precision;
  double max_asymmetry = 0.0;  // max |K - K^T| before averaging
};

/// K = D(I - Gamma) with d_ii = 1 / residual variance, symmetrized by averaging.
RegressionPrecision regression_to_precision(const NodewiseRegression& reg);

/// Exact least-squares nodewise regressions of every column on all others.
/// Residual variances use RSS/n or RSS/(n-1) so the result is consistent with
/// sample_covariance under the same denominator.
NodewiseRegression nodewise_ols(const MatrixXd& data, Denominator denominator = Denominator::NMinusOne);

struct GlassoOptions {
  int max_iterations = 5000;
  int max_inner_iterations = 10000;
  double tolerance = 1e-10;  // max-abs change in W between sweeps
};

struct GlassoFit {
  PrecisionMatrix precision;
  MatrixXd covariance;  // the working estimate W of Sigma
  int iterations = 0;
};

/// Graphical lasso by blockwise coordinate descent on the covariance.
/// Maximizes log|K| - tr(SK) - rho * sum_{i != j} |k_ij|. Pass a previous fit
/// as `warm` to start from its solution.
GlassoFit glasso(const CovMatrix& s, double rho, const GlassoOptions& options = {},
                 const GlassoFit* warm = nullptr);

/// Max violation of the glasso subgradient conditions at K.
double glasso_kkt_residual(const MatrixXd& s, const MatrixXd& k, double rho);

/// Number of nonzero upper-triangular off-diagonal entries.
int offdiag_nonzeros(const MatrixXd& k);

/// Gaussian log-likelihood (n/2)(log|K| - tr(SK)), constant dropped.
double gaussian_loglik(const MatrixXd& k, const MatrixXd& s, double n);

/// -2 loglik + E log n + 4 E gamma log m
double ebic(const PrecisionMatrix& k, const CovMatrix& s, double n, double gamma);

/// Log-spaced sequence from `max` down to `max * min_ratio`.
std::vector<double> log_spaced_grid(double max, double min_ratio, int count);

struct EbicGlassoOptions {
  std::vector<double> rho_grid;  // empty: log-spaced default
  int grid_size = 100;
  double min_ratio = 0.01;
  double gamma = 0.25;
  GlassoOptions glasso;
};

struct EbicGlassoResult {
  GgmNetwork network;
  PrecisionMatrix precision;
  double rho = 0.0;
  std::size_t selected = 0;
  std::vector<double> rho_grid;  // descending
  std::vector<double> scores;    // NaN where the fit failed
  std::vector<int> edge_counts;  // -1 where the fit failed
};

/// Fits glasso along a descending rho grid (warm started) and returns the
/// EBIC-minimizing network. Ties go to the larger rho.
EbicGlassoResult ebic_glasso(const CovMatrix& s, const EbicGlassoOptions& options = {},
                             std::vector<std::string> labels = {});

/// Significance thresholding with a Fisher z test of each partial correlation.
/// `dof` defaults to n - m - 1 (standard error 1/sqrt(dof)).
GgmNetwork threshold_significance(const GgmNetwork& r, long n, double alpha = 0.05,
                                  std::optional<double> dof = std::nullopt);

/// Two-sided Fisher z p-value for a partial correlation.
double partial_correlation_pvalue(double r, double dof);

}  // namespace mlgvar
