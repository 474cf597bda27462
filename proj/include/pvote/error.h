#pragma once

#include <stdexcept>
#include <string>

namespace pvote {

enum class ErrorCode {
  kBehindCamera,
  kInvalidRotation,
  kInvalidArgument,
  kParseError,
  kTooFewPoints,
  kKTooLarge,
  kDimensionMismatch,
  kTooFewPixels,
  kNoValidHypotheses,
  kZeroTotalWeight,
  kDegenerateConfiguration,
  kObjectNotVisible,
  kConfigError,
  kIoError,
};

const char* error_code_name(ErrorCode code);

// Every failure the library reports is an Error carrying one of the codes
// above, so callers can branch on the kind without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace pvote
