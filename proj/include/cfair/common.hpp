#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>

namespace cfair {

inline constexpr const char* kVersion = "0.1.0";

/// Invalid input data or configuration (CLI exit code 2).
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Numerical failure: degenerate norms, non-finite losses/gradients (CLI exit code 3).
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline double squared_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

inline double norm(std::span<const double> v) { return std::sqrt(squared_norm(v)); }

inline double dot(std::span<const double> u, std::span<const double> v) {
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) s += u[i] * v[i];
  return s;
}

/// CRC32 (IEEE 802.3 polynomial, reflected), as used for the embedding file checksum.
std::uint32_t crc32(const void* data, std::size_t size);

}  // namespace cfair
