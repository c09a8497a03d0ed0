#pragma once

#include <Eigen/Dense>

namespace mlgvar {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using BoolMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

namespace linalg {

inline MatrixXd symmetrize(const MatrixXd& a) { return 0.5 * (a + a.transpose()); }

double max_asymmetry(const MatrixXd& a);

/// Ratio of the largest to the smallest absolute eigenvalue of a symmetric
/// matrix; +inf when singular.
double condition_number_sym(const MatrixXd& a);

/// Largest eigenvalue modulus of a general square matrix.
double spectral_radius(const MatrixXd& a);

bool is_positive_definite(const MatrixXd& a);

/// log|A| for symmetric positive definite A. Throws SingularCovariance otherwise.
double log_det_spd(const MatrixXd& a);

/// Standard normal upper-tail helpers.
double normal_cdf(double z);
double two_sided_normal_p(double z);

/// Pearson correlation of two equal-length vectors; NaN if either is constant.
double correlation(const VectorXd& a, const VectorXd& b);

}  // namespace linalg
}  // namespace mlgvar
