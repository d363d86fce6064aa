#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mono3d {

// Failure classes. The numeric value doubles as the CLI exit code so scripts
// can branch on the failure class.
enum class ErrorCode {
  kPointBehindCamera = 1,
  kTooFewKeypoints,
  kNonFiniteInput,
  kRankDeficient,
  kAllWeightsZero,
  kSingularNormalMatrix,
  kNonPositiveDimension,
  kInvalidBin,
  kDegenerateRay,
  kDimensionMismatch,
  kIndexOutOfRange,
  kEmptyMesh,
  kAllVerticesClipped,
  kSizeMismatch,
  kTooFewPoints,
  kEmptyInput,
  kInsufficientPoints,
  kDivergedLoss,
  kProjectionFailure,
  kLengthMismatch,
  kMalformedLine,
  kMissingKey,
  kTruncatedFile,
  kUnsupportedFormat,
  kIoError,
};

std::string_view ErrorCodeName(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(ErrorCodeName(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace mono3d
