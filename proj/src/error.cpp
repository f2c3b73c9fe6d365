#include "morphsim/error.hpp"

namespace morphsim {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedRow: return "MalformedRow";
    case ErrorCode::SchemaMismatch: return "SchemaMismatch";
    case ErrorCode::EmptyFile: return "EmptyFile";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::InvalidDocument: return "InvalidDocument";
    case ErrorCode::UnsupportedVersion: return "UnsupportedVersion";
    case ErrorCode::DisconnectedGraph: return "DisconnectedGraph";
    case ErrorCode::NoFixedNode: return "NoFixedNode";
    case ErrorCode::UnresolvedReference: return "UnresolvedReference";
    case ErrorCode::TooFewPoints: return "TooFewPoints";
    case ErrorCode::TooFewPairs: return "TooFewPairs";
    case ErrorCode::NegativeStrain: return "NegativeStrain";
    case ErrorCode::StrainOutOfRange: return "StrainOutOfRange";
    case ErrorCode::OutOfCalibrationRange: return "OutOfCalibrationRange";
    case ErrorCode::DegenerateFamily: return "DegenerateFamily";
    case ErrorCode::NonMonotoneAnchors: return "NonMonotoneAnchors";
    case ErrorCode::InsufficientData: return "InsufficientData";
    case ErrorCode::NoCyclesFound: return "NoCyclesFound";
    case ErrorCode::OverlapInconsistency: return "OverlapInconsistency";
    case ErrorCode::NoBracket: return "NoBracket";
    case ErrorCode::VersionConflict: return "VersionConflict";
    case ErrorCode::SingularSystem: return "SingularSystem";
    case ErrorCode::SingularStiffness: return "SingularStiffness";
    case ErrorCode::FitDivergence: return "FitDivergence";
    case ErrorCode::NonConvergence: return "NonConvergence";
    case ErrorCode::MaxIterations: return "MaxIterations";
  }
  return "Unknown";
}

bool is_numerical(ErrorCode code) {
  switch (code) {
    case ErrorCode::SingularSystem:
    case ErrorCode::SingularStiffness:
    case ErrorCode::FitDivergence:
    case ErrorCode::NonConvergence:
    case ErrorCode::MaxIterations:
      return true;
    default:
      return false;
  }
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

}  // namespace morphsim
