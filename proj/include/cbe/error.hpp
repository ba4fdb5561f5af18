#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cbe {

enum class ErrorCode {
  MalformedRow,
  DuplicateId,
  EmptyCorpus,
  UnknownTask,
  BothEmpty,
  ParseError,
  InvalidQid,
  NetworkError,
  BadResponse,
  Timeout,
  EmptyAfterFiltering,
  DimensionMismatch,
  NoSentences,
  InvalidConfig,
  SingleClass,
  NonFiniteFeatures,
  NumericalError,
  EmptyMatrix,
  LengthMismatch,
  TooShort,
  ZeroVariance,
  TooFewMinority,
  EmptyGrid,
  UnknownSeed,
  IoError,
};

std::string_view error_code_name(ErrorCode code);

// All library failures are reported through this type so that callers (and
// the CLI) can dispatch on a stable code rather than on message text.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace cbe
