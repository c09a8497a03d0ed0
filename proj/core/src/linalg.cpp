#include "mlgvar/linalg.hpp"

#include "mlgvar/error.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>

namespace mlgvar::linalg {

double max_asymmetry(const MatrixXd& a) {
  if (a.size() == 0) return 0.0;
  return (a - a.transpose()).cwiseAbs().maxCoeff();
}

double condition_number_sym(const MatrixXd& a) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(a, Eigen::EigenvaluesOnly);
  const VectorXd ev = es.eigenvalues().cwiseAbs();
  const double lo = ev.minCoeff();
  if (lo == 0.0) return std::numeric_limits<double>::infinity();
  return ev.maxCoeff() / lo;
}

double spectral_radius(const MatrixXd& a) {
  if (a.size() == 0) return 0.0;
  Eigen::EigenSolver<MatrixXd> es(a, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

bool is_positive_definite(const MatrixXd& a) {
  Eigen::LLT<MatrixXd> llt(a);
  return llt.info() == Eigen::Success;
}

double log_det_spd(const MatrixXd& a) {
  Eigen::LLT<MatrixXd> llt(a);
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorCode::SingularCovariance, "matrix is not positive definite");
  }
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double two_sided_normal_p(double z) { return std::erfc(std::abs(z) / std::sqrt(2.0)); }

double correlation(const VectorXd& a, const VectorXd& b) {
  const Eigen::Index n = a.size();
  if (n != b.size() || n < 2) return std::numeric_limits<double>::quiet_NaN();
  const VectorXd ca = a.array() - a.mean();
  const VectorXd cb = b.array() - b.mean();
  const double sa = ca.norm();
  const double sb = cb.norm();
  if (sa == 0.0 || sb == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return ca.dot(cb) / (sa * sb);
}

}  // namespace mlgvar::linalg
