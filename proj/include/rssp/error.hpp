#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace rssp {

/// Base class for every error raised by the library.
class error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A partial sum left the signed 64-bit range.
class overflow_error : public error {
 public:
  using error::error;
};

/// Backtracking could not explain a sum from the stored checkpoints.
class unreachable_sum : public error {
 public:
  using error::error;
};

/// Neither the split enumeration nor the offset DP can handle the instance.
class oracle_too_large : public error {
 public:
  using error::error;
};

/// Invalid argument to a solver or generator.
class invalid_argument : public error {
 public:
  using error::error;
};

namespace detail {

inline std::int64_t checked_add(std::int64_t a, std::int64_t b) {
  std::int64_t out;
  if (__builtin_add_overflow(a, b, &out)) {
    throw overflow_error("partial sum overflow: " + std::to_string(a) + " + " + std::to_string(b));
  }
  return out;
}

inline std::int64_t checked_sub(std::int64_t a, std::int64_t b) {
  std::int64_t out;
  if (__builtin_sub_overflow(a, b, &out)) {
    throw overflow_error("partial sum overflow: " + std::to_string(a) + " - " + std::to_string(b));
  }
  return out;
}

inline std::int64_t checked_neg(std::int64_t a) { return checked_sub(0, a); }

// |a - b| without leaving the unsigned range.
inline std::uint64_t abs_diff(std::int64_t a, std::int64_t b) {
  return a >= b ? static_cast<std::uint64_t>(a) - static_cast<std::uint64_t>(b)
                : static_cast<std::uint64_t>(b) - static_cast<std::uint64_t>(a);
}

}  // namespace detail
}  // namespace rssp
