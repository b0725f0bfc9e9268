#pragma once

#include <stdexcept>
#include <string>

namespace spikechain {

enum class ErrorCode {
  kEmptyStream,
  kShapeExceedsGeometry,
  kBadMagic,
  kTruncatedPayload,
  kUnsortedTimestamps,
  kInvalidPolarity,
  kInvalidCsv,
  kIoFailure,
  kNoValidChains,
  kInfeasibleDuration,
  kHeterogeneousSources,
  kInsufficientFrames,
  kEmptyTestUsers,
  kGeometryMismatch,
  kTimeIndexBeyondHorizon,
  kMissingTrace,
  kClassCountMismatch,
  kEmptySampleSet,
  kNoTemporalParameters,
  kNotBnttCheckpoint,
  kInvalidArgument,
  kInvalidConfig,
};

const char* to_string(ErrorCode code);

/// Exception carrying a machine-checkable code next to the human message.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace spikechain
