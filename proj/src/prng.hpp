#pragma once

#include <cstdint>
#include <random>

namespace vflow {

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Counter-based generator: the value for (seed, stream, index) is a pure
/// hash, so any weight or embedding entry can be drawn independently of the
/// order in which the others are drawn.
constexpr std::uint64_t counter_bits(std::uint64_t seed, std::uint64_t stream,
                                     std::uint64_t index) noexcept {
  return mix64(mix64(seed ^ mix64(stream)) + index * 0xd1b54a32d192ed03ULL);
}

/// Uniform in [0, 1) with 53 random bits.
constexpr double counter_uniform(std::uint64_t seed, std::uint64_t stream,
                                 std::uint64_t index) noexcept {
  return static_cast<double>(counter_bits(seed, stream, index) >> 11) *
         0x1.0p-53;
}

/// Sequential generator for search-time sampling. The double conversion is
/// done by hand so draws do not depend on the standard library's
/// distribution implementation.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace vflow
