#pragma once

#include <stdexcept>
#include <string>

namespace cpdlab {

enum class ErrorCode {
  InvalidArgument,
  DimMismatch,
  NonSymmetric,
  NoConvergence,
  ZeroVector,
  AlphaOutOfRange,
  OutsideBall,
  CountMismatch,
  NonPositiveVariance,
  PointKindMismatch,
  DimTooSmall,
  NonBinaryWeight,
  DivergenceDetected,
  OverflowGuard,
  ConfigInvalid,
  SchemaError,
};

const char* to_string(ErrorCode code);

/// Every failure raised by the library carries one of the codes above so
/// callers (the CLI in particular) can map it onto an exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace cpdlab
