#pragma once

#include <functional>

#include "seamless/error.hpp"

namespace seamless::testing {

inline constexpr ErrorCode kNoError = static_cast<ErrorCode>(0);

/// Code of the seamless::Error thrown by fn, or kNoError.
inline ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return kNoError;
}

}  // namespace seamless::testing
