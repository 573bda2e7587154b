#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace hpm {

enum class ErrorKind {
  DimensionMismatch,
  NotPositiveDefinite,
  EmptyInput,
  DegenerateShape,
  ParseError,
  SchemaViolation,
  CardinalityMismatch,
  TooFewSamples,
  IndexOutOfRange,
  EmptyCluster,
  TooManyNodes,
  DegenerateState,
  MonotonicityViolation,
  InvalidArgument,
  IoError,
};

std::string_view to_string(ErrorKind kind) noexcept;

// Every failure raised by the library carries a kind so the CLI can map it
// onto a stable exit code.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace hpm
