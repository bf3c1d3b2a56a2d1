#pragma once

#include <cmath>
#include <cstdint>

namespace cfair {

/// Counter-based pseudo-random generator with pinned cross-platform output.
///
/// Draw j of stream s under seed q is the SplitMix64 finalizer applied to
/// the Weyl state `q + (s + 1) * 0x9E3779B97F4A7C15 + j * 0xBF58476D1CE4E5B9`.
/// Uniform doubles take the top 53 bits; Gaussians use the Box-Muller
/// transform on one uniform pair (both branches consumed, the sine branch is
/// cached). No platform RNG is involved, so identical (seed, stream) always
/// reproduces the identical sequence.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0)
      : base_(seed + (stream + 1) * 0x9E3779B97F4A7C15ULL) {}

  std::uint64_t next_u64() {
    std::uint64_t z = base_ + counter_ * 0xBF58476D1CE4E5B9ULL;
    ++counter_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform double in [0, 1).
  double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform double in (0, 1]; safe as a log argument.
  double next_unit_open() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  /// Unbiased-enough index in [0, n) via 128-bit multiply-shift (no float path).
  std::size_t uniform_index(std::size_t n) {
    return static_cast<std::size_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  /// Standard normal draw (Box-Muller).
  double next_gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = next_unit_open();
    const double u2 = next_unit();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * 3.14159265358979323846 * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

 private:
  std::uint64_t base_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace cfair
