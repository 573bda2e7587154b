#include "hpm/error.hpp"

namespace hpm {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::DegenerateShape: return "DegenerateShape";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::SchemaViolation: return "SchemaViolation";
    case ErrorKind::CardinalityMismatch: return "CardinalityMismatch";
    case ErrorKind::TooFewSamples: return "TooFewSamples";
    case ErrorKind::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorKind::EmptyCluster: return "EmptyCluster";
    case ErrorKind::TooManyNodes: return "TooManyNodes";
    case ErrorKind::DegenerateState: return "DegenerateState";
    case ErrorKind::MonotonicityViolation: return "MonotonicityViolation";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace hpm
