// Shared error types and small utilities.
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace hammeta {

// Dimension or layout mismatch between operands.
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Input outside a function's mathematical domain (log of a non-positive
// value, coincident gravitating bodies, ...).
struct DomainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// NaN/Inf encountered, or an optimization aborted on a non-finite loss.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Misuse of the expression tape (unbound input, node from another tape,
// gradient of a non-scalar, ...).
struct TapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// File format / filesystem problems.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IntegrationError : std::runtime_error {
  double t_fail;
  IntegrationError(const std::string& what, double t)
      : std::runtime_error(what), t_fail(t) {}
};

// FNV-1a, used for manifest hashes. Stable across platforms.
inline std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return out;
}

}  // namespace hammeta
