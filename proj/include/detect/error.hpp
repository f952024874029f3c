#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace detect {

enum class ErrorCode {
  LengthMismatch,
  TokenOutOfRange,
  EmptyDraw,
  DegenerateBatch,
  NonFiniteLoss,
  EmptyReference,
  BadWindowOrder,
  SingleClass,
  Saturated,
  PoolExhausted,
  BadTask,
  BadRecord,
  EmptyReport,
  BadMagic,
  Truncated,
  InvariantViolation,
  Transport,
  BadResponse,
  Timeout,
  InvalidArgument,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

private:
  ErrorCode code_;
};

}  // namespace detect
