#include "mlgvar/error.hpp"

namespace mlgvar {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InsufficientData: return "INSUFFICIENT_DATA";
    case ErrorCode::SingularCovariance: return "SINGULAR_COVARIANCE";
    case ErrorCode::InvalidPrecision: return "INVALID_PRECISION";
    case ErrorCode::ConvergenceFailure: return "CONVERGENCE_FAILURE";
    case ErrorCode::SingularDesign: return "SINGULAR_DESIGN";
    case ErrorCode::NonStationary: return "NON_STATIONARY";
    case ErrorCode::GenerationFailure: return "GENERATION_FAILURE";
    case ErrorCode::ParseError: return "PARSE_ERROR";
    case ErrorCode::DuplicateOccasion: return "DUPLICATE_OCCASION";
    case ErrorCode::ShapeMismatch: return "SHAPE_MISMATCH";
    case ErrorCode::ConfigInvalid: return "CONFIG_INVALID";
    case ErrorCode::Io: return "IO_ERROR";
  }
  return "UNKNOWN";
}

}  // namespace mlgvar
