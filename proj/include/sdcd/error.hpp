#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sdcd {

enum class ErrorKind {
  kInvalidArgument,
  kNonDivisibleDimensions,
  kSpecMismatch,
  kImageTooSmall,
  kBoostUnsupported,
  kBackendUnavailable,
  kContextOverflow,
  kInvalidHandle,
  kProtocolViolation,
  kLengthMismatch,
  kEmptyCandidateSet,
  kDegenerateDistribution,
  kTraceWriteFailure,
  kEmptyInput,
  kMalformedRecord,
  kIo,
  kConfig,
  kEmbedderFailure,
  kDecodeError,
  kModelError,
};

std::string_view to_string(ErrorKind kind);

// Single exception type for the library; callers branch on kind().
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace sdcd
