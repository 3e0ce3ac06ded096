#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace inpaint {

enum class ErrorCode {
  // volume-io
  BadMagic,
  UnsupportedDatatype,
  UnsupportedOrientation,
  TruncatedFile,
  NonFiniteData,
  IoFailure,
  // shared
  ShapeMismatch,
  IndexOutOfRange,
  // preprocess
  ZeroVariance,
  EmptyDomain,
  EmptyMask,
  // nn / models
  NonScalarLoss,
  NonFiniteLoss,
  BadRange,
  // metrics
  EmptyRegion,
  RegionTooSmall,
  EmptyInput,
  // phantom
  SpecInfeasible,
  // cli
  ConfigError,
  VersionMismatch,
  MissingPair,
  BadSliceIndex,
};

std::string_view to_string(ErrorCode code);

/// Process exit code for a failure of this kind: 2 config, 3 data, 4 numeric.
int exit_code_for(ErrorCode code);

class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string &message);

  ErrorCode code() const noexcept { return code_; }

private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string &message);

} // namespace inpaint
