#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

namespace ltsm {

/// SplitMix64 generator. Used everywhere instead of <random> engines and
/// distributions so that streams are identical across standard libraries.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, bound); bound must be > 0.
  std::uint64_t below(std::uint64_t bound);

  /// Standard normal via Box-Muller (no cached second value).
  double normal();

 private:
  std::uint64_t state_;
};

std::uint64_t fnv1a64(std::string_view text);

/// Per-module seed from a global seed: one SplitMix64 step over
/// `global ^ fnv1a64(label)`.
std::uint64_t derive_seed(std::uint64_t global, std::string_view label);

/// Fisher-Yates permutation of 0..n-1.
std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed);

}  // namespace ltsm
