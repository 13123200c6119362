#include "sdcd/error.hpp"

namespace sdcd {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidArgument: return "InvalidArgument";
    case ErrorKind::kNonDivisibleDimensions: return "NonDivisibleDimensions";
    case ErrorKind::kSpecMismatch: return "SpecMismatch";
    case ErrorKind::kImageTooSmall: return "ImageTooSmall";
    case ErrorKind::kBoostUnsupported: return "BoostUnsupported";
    case ErrorKind::kBackendUnavailable: return "BackendUnavailable";
    case ErrorKind::kContextOverflow: return "ContextOverflow";
    case ErrorKind::kInvalidHandle: return "InvalidHandle";
    case ErrorKind::kProtocolViolation: return "ProtocolViolation";
    case ErrorKind::kLengthMismatch: return "LengthMismatch";
    case ErrorKind::kEmptyCandidateSet: return "EmptyCandidateSet";
    case ErrorKind::kDegenerateDistribution: return "DegenerateDistribution";
    case ErrorKind::kTraceWriteFailure: return "TraceWriteFailure";
    case ErrorKind::kEmptyInput: return "EmptyInput";
    case ErrorKind::kMalformedRecord: return "MalformedRecord";
    case ErrorKind::kIo: return "IoError";
    case ErrorKind::kConfig: return "ConfigError";
    case ErrorKind::kEmbedderFailure: return "EmbedderFailure";
    case ErrorKind::kDecodeError: return "DecodeError";
    case ErrorKind::kModelError: return "ModelError";
  }
  return "Unknown";
}

}  // namespace sdcd
