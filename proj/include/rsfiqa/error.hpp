#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace rsfiqa {

enum class ErrorCode {
  ShapeMismatch,
  InvalidAxis,
  InvalidTarget,
  NonScalarLoss,
  IndivisibleInput,
  EmptyInput,
  InvalidL,
  IoError,
  CorruptMaskFile,
  UnparseableResponse,
  EmptyRegion,
  TransportError,
  AuthError,
  CorruptCacheLine,
  EmptyText,
  TargetMismatch,
  LengthMismatch,
  EmptyBatch,
  DegenerateRange,
  DegenerateVariance,
  IdMismatch,
  MalformedCsv,
  MissingImage,
  TooFewSamples,
  NonFiniteLoss,
  InvalidGrid,
  InvalidConfig,
  CorruptCheckpoint,
  UsageError,
};

std::string_view error_name(ErrorCode code) noexcept;

// Every domain failure carries a machine-readable category; the CLI prints
// it verbatim as the first token of its error line.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }
  std::string_view category() const noexcept { return error_name(code_); }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace rsfiqa
