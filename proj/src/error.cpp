#include "cpdlab/error.hpp"

namespace cpdlab {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::NonSymmetric: return "NonSymmetric";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::AlphaOutOfRange: return "AlphaOutOfRange";
    case ErrorCode::OutsideBall: return "OutsideBall";
    case ErrorCode::CountMismatch: return "CountMismatch";
    case ErrorCode::NonPositiveVariance: return "NonPositiveVariance";
    case ErrorCode::PointKindMismatch: return "PointKindMismatch";
    case ErrorCode::DimTooSmall: return "DimTooSmall";
    case ErrorCode::NonBinaryWeight: return "NonBinaryWeight";
    case ErrorCode::DivergenceDetected: return "DivergenceDetected";
    case ErrorCode::OverflowGuard: return "OverflowGuard";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::SchemaError: return "SchemaError";
  }
  return "Unknown";
}

}  // namespace cpdlab
