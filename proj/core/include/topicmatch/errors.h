#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace topicmatch {

enum class ErrorCode {
  kShapeError,
  kDegenerateWarp,
  kDegeneratePose,
  kUndefinedDistance,
  kInsufficientMatches,
  kNoConsensus,
  kEmptyInput,
  kAllMasked,
  kNoGroundTruth,
  kNoMatches,
  kNonFinite,
  kEmptyDataset,
  kMissingFile,
  kChecksumMismatch,
  kNoImages,
  kUnreadableImage,
  kIOError,
  kVersionMismatch,
  kConfigHashMismatch,
  kConfigError,
  kPopulationMismatch,
};

std::string_view error_code_name(ErrorCode code);

// Every failure raised by the library carries one of the codes above so
// callers (the CLI in particular) can map it to an exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) fail(code, message);
}

}  // namespace topicmatch
