#pragma once

// Univariate linear mixed models estimated by REML.
//
//   y = X beta + Z_g b_g + e,   b_g ~ N(0, sigma^2 Psi),   e ~ N(0, sigma^2 I)
//
// X = [1, x_within, x_between]; Z = [1, x_within] (or just the intercept,
// depending on RandomSpec). Psi = Lambda Lambda^T is optimized over the
// entries of the lower-triangular factor Lambda (diagonal only for
// "orthogonal"); sigma^2 and beta are profiled out.

#include "mlgvar/linalg.hpp"

#include <span>
#include <string>
#include <vector>

namespace mlgvar {

enum class RandomSpec { Unique, Correlated, Orthogonal, Fixed };

std::string_view to_string(RandomSpec spec);
RandomSpec parse_random_spec(std::string_view text);

enum class PValueMethod { WaldZ, WaldT };

struct LmmOptions {
  int max_iterations = 400;
  double gradient_tolerance = 1e-6;
  /// Also converged when the deviance drops by less than
  /// stall_tolerance * (1 + |deviance|) over stall_window accepted steps.
  double stall_tolerance = 1e-8;
  std::size_t stall_window = 10;
  /// Random-effect SDs below this (relative to the residual SD) are flagged
  /// as boundary fits.
  double boundary_tolerance = 1e-3;
  Eigen::Index max_correlated_predictors = 8;
  PValueMethod pvalues = PValueMethod::WaldZ;
};

struct LmmFit {
  /// Order: intercept, within predictors, between predictors.
  VectorXd fixed;
  VectorXd fixed_se;  // +inf for degenerate (all-zero) regressors
  VectorXd fixed_p;
  /// Covariance of [intercept, within...] random effects (zero where absent).
  MatrixXd random_cov;
  /// Per-group deviations from the fixed [intercept, within...] coefficients.
  MatrixXd blups;
  std::vector<int> group_labels;  // row order of `blups`
  VectorXd residuals;             // conditional residuals per observation
  VectorXd group_residual_variance;
  double residual_variance = 0.0;
  double reml_deviance = 0.0;
  std::vector<double> deviance_trace;  // accepted optimizer steps
  bool boundary = false;
  int iterations = 0;
  /// Groups left out of a RandomSpec::Unique fit for having too few rows.
  std::vector<int> excluded_groups;
};

/// Fits the model. x_between columns must be constant within group; all-zero
/// columns get a zero coefficient with infinite standard error.
/// Throws InsufficientData (fewer than 2 groups for a random spec), ConfigInvalid
/// (too many correlated predictors), SingularDesign, or ConvergenceFailure.
LmmFit fit_lmm_reml(const VectorXd& y, const MatrixXd& x_within, const MatrixXd& x_between,
                    std::span<const int> groups, RandomSpec random, const LmmOptions& options = {});

/// Profiled REML deviance of the random intercept-and-slope model at a given
/// relative covariance Psi (random effects in the same column layout as
/// LmmFit::random_cov). Exposed for diagnostics and tests.
double reml_deviance_at(const VectorXd& y, const MatrixXd& x_within, const MatrixXd& x_between,
                        std::span<const int> groups, const MatrixXd& psi);

}  // namespace mlgvar
