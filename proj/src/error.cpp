#include "spikechain/error.hpp"

namespace spikechain {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kEmptyStream: return "empty stream";
    case ErrorCode::kShapeExceedsGeometry: return "shape exceeds geometry";
    case ErrorCode::kBadMagic: return "bad magic";
    case ErrorCode::kTruncatedPayload: return "truncated payload";
    case ErrorCode::kUnsortedTimestamps: return "unsorted timestamps";
    case ErrorCode::kInvalidPolarity: return "invalid polarity";
    case ErrorCode::kInvalidCsv: return "invalid csv";
    case ErrorCode::kIoFailure: return "io failure";
    case ErrorCode::kNoValidChains: return "no valid chains";
    case ErrorCode::kInfeasibleDuration: return "infeasible duration constraint";
    case ErrorCode::kHeterogeneousSources: return "heterogeneous chain sources";
    case ErrorCode::kInsufficientFrames: return "insufficient frames";
    case ErrorCode::kEmptyTestUsers: return "empty test user set";
    case ErrorCode::kGeometryMismatch: return "geometry mismatch";
    case ErrorCode::kTimeIndexBeyondHorizon: return "time index beyond configured horizon";
    case ErrorCode::kMissingTrace: return "missing trace";
    case ErrorCode::kClassCountMismatch: return "class-count mismatch";
    case ErrorCode::kEmptySampleSet: return "empty sample set";
    case ErrorCode::kNoTemporalParameters: return "no temporal parameters";
    case ErrorCode::kNotBnttCheckpoint: return "not a BNTT checkpoint";
    case ErrorCode::kInvalidArgument: return "invalid argument";
    case ErrorCode::kInvalidConfig: return "invalid config";
  }
  return "unknown";
}

}  // namespace spikechain
