#pragma once

#include <array>
#include <cstdint>

namespace fredse {

/*
 * xoshiro256** generator seeded through SplitMix64.
 *
 * The stream is fully specified so that grids and simulated datasets are
 * reproducible bit-for-bit on any platform:
 *   - state[k] = splitmix64(seed) for k = 0..3 (successive outputs)
 *   - uniform() = (next() >> 11) * 2^-53, in [0, 1)
 *   - normal()  = sqrt(-2 log(1 - u1)) * cos(2 pi u2) from two successive
 *                 uniforms; no second variate is cached.
 */
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next();
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  double normal(double mean, double sd) { return mean + sd * normal(); }
  bool bernoulli(double p) { return uniform() < p; }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  const std::array<std::uint64_t, 4>& state() const noexcept { return s_; }

 private:
  std::array<std::uint64_t, 4> s_{};
};

/// Seed for replication `rep` of a sweep started at `base_seed`.
inline std::uint64_t replication_seed(std::uint64_t base_seed, std::uint64_t rep) { return base_seed + rep; }

/// Independent sub-stream seed: SplitMix64 finaliser applied to seed + stream * golden gamma.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace fredse
