#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mlgvar {

enum class ErrorCode {
  InsufficientData,
  SingularCovariance,
  InvalidPrecision,
  ConvergenceFailure,
  SingularDesign,
  NonStationary,
  GenerationFailure,
  ParseError,
  DuplicateOccasion,
  ShapeMismatch,
  ConfigInvalid,
  Io,
};

/// Stable machine-readable name, e.g. "INSUFFICIENT_DATA".
std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Iterative solver gave up. Carries the last iterate and the objective trace
/// so callers can inspect how far it got.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, Eigen::MatrixXd last_iterate,
                   std::vector<double> trace = {})
      : Error(ErrorCode::ConvergenceFailure, what),
        last_iterate_(std::move(last_iterate)),
        trace_(std::move(trace)) {}

  const Eigen::MatrixXd& last_iterate() const noexcept { return last_iterate_; }
  const std::vector<double>& trace() const noexcept { return trace_; }

 private:
  Eigen::MatrixXd last_iterate_;
  std::vector<double> trace_;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t row, std::string column, const std::string& what)
      : Error(ErrorCode::ParseError, what), row_(row), column_(std::move(column)) {}

  std::size_t row() const noexcept { return row_; }
  const std::string& column() const noexcept { return column_; }

 private:
  std::size_t row_;
  std::string column_;
};

}  // namespace mlgvar
