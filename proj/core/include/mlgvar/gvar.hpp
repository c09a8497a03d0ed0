#pragma once

// Lag-1 graphical VAR for a single time series.
//
//   y_t = mu + B (y_{t-1} - mu) + e_t,   e_t ~ N(0, Theta)
//
// B holds temporal effects (row = response at t, column = predictor at t-1);
// the contemporaneous network is the partial-correlation standardization of
// K(Theta) = Theta^-1.

#include "mlgvar/ggm.hpp"

#include <optional>
#include <span>
#include <vector>

namespace mlgvar {

struct TimeSeries {
  MatrixXd values;     // T x m; cells flagged in `missing` are ignored
  BoolMatrix missing;  // T x m
  std::optional<std::vector<long>> day;

  Eigen::Index occasions() const { return values.rows(); }
  Eigen::Index variables() const { return values.cols(); }

  /// Complete series; NaN cells are flagged missing.
  static TimeSeries from_matrix(MatrixXd values, std::optional<std::vector<long>> day = std::nullopt);
};

enum class DayPolicy { Break, Bridge };
enum class MissingPolicy { PairwiseDelete };

struct LaggedDesign {
  MatrixXd current;  // responses at t
  MatrixXd lagged;   // predictors at t-1
  std::vector<Eigen::Index> occasion;  // source occasion t of each row

  Eigen::Index rows() const { return current.rows(); }
  Eigen::Index variables() const { return current.cols(); }
};

struct GvarModel {
  MatrixXd beta;
  PrecisionMatrix theta_precision;
  MatrixXd theta;  // residual covariance implied by theta_precision
  GgmNetwork contemporaneous;
  VectorXd means;
  BoolMatrix temporal_included;
  long rows_used = 0;
};

/// Consecutive (t-1, t) pairs. Under DayPolicy::Break no pair spans a day
/// change; any pair touching a missing cell is dropped.
LaggedDesign build_lagged_design(const TimeSeries& series, DayPolicy day_policy = DayPolicy::Break,
                                 MissingPolicy missing_policy = MissingPolicy::PairwiseDelete);

/// Row-wise concatenation (pooling designs of several subjects).
LaggedDesign stack_designs(std::span<const LaggedDesign> designs);

/// Saturated least-squares VAR. With `center`, current and lagged blocks are
/// centered by their own means (equivalent to fitting an intercept). The
/// residual covariance uses the T' denominator.
GvarModel fit_var_ols(const LaggedDesign& design, bool center = true,
                      std::vector<std::string> labels = {});

struct MrceOptions {
  double tolerance = 1e-5;  // max-abs parameter change between outer iterations
  int max_outer_iterations = 200;
  int max_inner_sweeps = 2000;
  double inner_tolerance = 1e-9;
  GlassoOptions glasso;
};

struct MrceFit {
  GvarModel model;
  std::vector<double> objective_trace;  // one value per outer iteration
  int iterations = 0;
  MatrixXd beta_t;     // predictors x responses working copy, for warm starts
  GlassoFit k_fit;
};

/// Joint L1-penalized estimation of B and K(Theta) by alternating coordinate
/// descent on B (L1 weight lambda_beta, covariance-weighted by K) and glasso on
/// the residual covariance (penalty lambda_kappa). Minimizes
///
///   tr(S_R K) - log|K| + lambda_beta sum|b_ij| + lambda_kappa sum_{i!=j}|k_ij|.
MrceFit mrce_fit(const LaggedDesign& design, double lambda_beta, double lambda_kappa,
                 const MrceOptions& options = {}, const MrceFit* warm = nullptr, bool center = true,
                 std::vector<std::string> labels = {});

struct GvarSearchOptions {
  std::vector<double> grid_beta;   // empty: log-spaced from data
  std::vector<double> grid_kappa;  // empty: log-spaced from data
  int grid_beta_size = 10;
  int grid_kappa_size = 10;
  double min_ratio = 0.01;
  double gamma = 0.25;
  bool center = true;
  MrceOptions mrce;
};

struct GvarSearchResult {
  GvarModel model;
  double lambda_beta = 0.0;
  double lambda_kappa = 0.0;
  std::vector<double> grid_beta;   // descending
  std::vector<double> grid_kappa;  // descending
  MatrixXd scores;                 // kappa x beta; NaN where the fit failed
};

/// EBIC of a GVAR fit: E counts nonzero B entries plus nonzero upper
/// off-diagonal K entries; the log term uses m^2 candidate edges.
double gvar_ebic(const GvarModel& model, const MatrixXd& residual_cov, double n, double gamma);

GvarSearchResult gvar_ebic_search(const LaggedDesign& design, const GvarSearchOptions& options = {},
                                  std::vector<std::string> labels = {});

/// Sigma solving Sigma = B Sigma B^T + Theta, via
/// Vec(Sigma) = (I - B (x) B)^-1 Vec(Theta). Throws NonStationary when the
/// spectral radius of B is >= 1.
CovMatrix stationary_covariance(const MatrixXd& beta, const MatrixXd& theta);

/// b_ij * sd_j / sd_i with standard deviations from the stationary covariance.
MatrixXd standardize_temporal(const GvarModel& model);

}  // namespace mlgvar
