#include "topicmatch/errors.h"

namespace topicmatch {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kShapeError: return "ShapeError";
    case ErrorCode::kDegenerateWarp: return "DegenerateWarp";
    case ErrorCode::kDegeneratePose: return "DegeneratePose";
    case ErrorCode::kUndefinedDistance: return "UndefinedDistance";
    case ErrorCode::kInsufficientMatches: return "InsufficientMatches";
    case ErrorCode::kNoConsensus: return "NoConsensus";
    case ErrorCode::kEmptyInput: return "EmptyInput";
    case ErrorCode::kAllMasked: return "AllMasked";
    case ErrorCode::kNoGroundTruth: return "NoGroundTruth";
    case ErrorCode::kNoMatches: return "NoMatches";
    case ErrorCode::kNonFinite: return "NonFinite";
    case ErrorCode::kEmptyDataset: return "EmptyDataset";
    case ErrorCode::kMissingFile: return "MissingFile";
    case ErrorCode::kChecksumMismatch: return "ChecksumMismatch";
    case ErrorCode::kNoImages: return "NoImages";
    case ErrorCode::kUnreadableImage: return "UnreadableImage";
    case ErrorCode::kIOError: return "IOError";
    case ErrorCode::kVersionMismatch: return "VersionMismatch";
    case ErrorCode::kConfigHashMismatch: return "ConfigHashMismatch";
    case ErrorCode::kConfigError: return "ConfigError";
    case ErrorCode::kPopulationMismatch: return "PopulationMismatch";
  }
  return "Unknown";
}

}  // namespace topicmatch
