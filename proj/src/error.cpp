#include "inpaint/error.hpp"

namespace inpaint {

std::string_view to_string(ErrorCode code) {
  switch (code) {
  case ErrorCode::BadMagic: return "BadMagic";
  case ErrorCode::UnsupportedDatatype: return "UnsupportedDatatype";
  case ErrorCode::UnsupportedOrientation: return "UnsupportedOrientation";
  case ErrorCode::TruncatedFile: return "TruncatedFile";
  case ErrorCode::NonFiniteData: return "NonFiniteData";
  case ErrorCode::IoFailure: return "IoFailure";
  case ErrorCode::ShapeMismatch: return "ShapeMismatch";
  case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
  case ErrorCode::ZeroVariance: return "ZeroVariance";
  case ErrorCode::EmptyDomain: return "EmptyDomain";
  case ErrorCode::EmptyMask: return "EmptyMask";
  case ErrorCode::NonScalarLoss: return "NonScalarLoss";
  case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
  case ErrorCode::BadRange: return "BadRange";
  case ErrorCode::EmptyRegion: return "EmptyRegion";
  case ErrorCode::RegionTooSmall: return "RegionTooSmall";
  case ErrorCode::EmptyInput: return "EmptyInput";
  case ErrorCode::SpecInfeasible: return "SpecInfeasible";
  case ErrorCode::ConfigError: return "ConfigError";
  case ErrorCode::VersionMismatch: return "VersionMismatch";
  case ErrorCode::MissingPair: return "MissingPair";
  case ErrorCode::BadSliceIndex: return "BadSliceIndex";
  }
  return "Unknown";
}

int exit_code_for(ErrorCode code) {
  switch (code) {
  case ErrorCode::ConfigError:
  case ErrorCode::VersionMismatch:
    return 2;
  case ErrorCode::ZeroVariance:
  case ErrorCode::NonFiniteLoss:
  case ErrorCode::NonFiniteData:
  case ErrorCode::BadRange:
    return 4;
  default:
    return 3;
  }
}

Error::Error(ErrorCode code, const std::string &message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message),
      code_(code) {}

void fail(ErrorCode code, const std::string &message) {
  throw Error(code, message);
}

} // namespace inpaint
