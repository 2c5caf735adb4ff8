#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string_view>

namespace tvae {

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes) noexcept;

/// SplitMix64 finalizer over (a, b); the combinator for all derived seeds.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) noexcept;

/// Per-trajectory child seed = mix(global seed, hash(trajectory id)).
inline std::uint64_t child_seed(std::uint64_t seed, std::string_view id) noexcept {
  return mix_seed(seed, fnv1a64(id));
}

/// Seeded random source. Distribution code is written out by hand so that
/// draw sequences are identical across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). n must be positive.
  std::size_t index(std::size_t n);

  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace tvae
