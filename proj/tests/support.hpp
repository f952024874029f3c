#pragma once

#include <optional>

#include "detect/error.hpp"

namespace support {

// Code of the detect::Error thrown by f, or nullopt when it returns normally.
template <typename F>
std::optional<detect::ErrorCode> error_of(F&& f) {
  try {
    f();
  } catch (const detect::Error& e) {
    return e.code();
  }
  return std::nullopt;
}

}  // namespace support
