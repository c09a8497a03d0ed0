#pragma once

#include <mlgvar/error.hpp>
#include <mlgvar/ggm.hpp>

#include <doctest.h>

#include <cmath>
#include <optional>

namespace testing {

inline double max_abs_diff(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  REQUIRE(a.rows() == b.rows());
  REQUIRE(a.cols() == b.cols());
  return (a - b).cwiseAbs().maxCoeff();
}

inline Eigen::MatrixXd mat(std::initializer_list<std::initializer_list<double>> rows) {
  Eigen::MatrixXd m(rows.size(), rows.begin()->size());
  Eigen::Index i = 0;
  for (const auto& r : rows) {
    Eigen::Index j = 0;
    for (double v : r) m(i, j++) = v;
    ++i;
  }
  return m;
}

// Sigma of the three-variable worked example.
inline Eigen::MatrixXd worked_sigma() {
  return mat({{1, -0.26, 0.31}, {-0.26, 1, -0.08}, {0.31, -0.08, 1}});
}

template <class F>
std::optional<mlgvar::ErrorCode> error_code_of(F&& f) {
  try {
    f();
  } catch (const mlgvar::Error& e) {
    return e.code();
  }
  return std::nullopt;
}

}  // namespace testing

#define CHECK_ERROR_CODE(expr, expected) CHECK(testing::error_code_of([&] { (void)(expr); }) == (expected))
