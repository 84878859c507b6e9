#pragma once

#include <cstdint>
#include <optional>

namespace zsml {

/// Deterministic xoshiro256** generator seeded through splitmix64.
///
/// All derived draws (uniform, normal, index) are computed with portable
/// integer and IEEE arithmetic, so a seed reproduces the same stream on any
/// platform; std:: distributions are deliberately not used.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64();

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform();

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t index(std::uint64_t n);

  /// Standard normal via Box-Muller; the second variate of each pair is cached.
  double normal();

  /// Independent child stream; advances this generator by one draw.
  Rng split();

 private:
  std::uint64_t seed_;
  std::uint64_t s_[4];
  std::optional<double> cached_normal_;
};

}  // namespace zsml
