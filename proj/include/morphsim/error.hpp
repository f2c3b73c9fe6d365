#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace morphsim {

enum class ErrorCode {
  // input / document errors
  MalformedRow,
  SchemaMismatch,
  EmptyFile,
  IoFailure,
  InvalidArgument,
  InvalidDocument,
  UnsupportedVersion,
  DisconnectedGraph,
  NoFixedNode,
  UnresolvedReference,
  TooFewPoints,
  TooFewPairs,
  NegativeStrain,
  StrainOutOfRange,
  OutOfCalibrationRange,
  DegenerateFamily,
  NonMonotoneAnchors,
  InsufficientData,
  NoCyclesFound,
  OverlapInconsistency,
  NoBracket,
  VersionConflict,
  // numerical failures
  SingularSystem,
  SingularStiffness,
  FitDivergence,
  NonConvergence,
  MaxIterations,
};

std::string_view to_string(ErrorCode code);

/// True for failures of a numerical procedure (exit code 2), false for bad input (exit code 1).
bool is_numerical(ErrorCode code);

class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

}  // namespace morphsim
