#pragma once

#include <cmath>
#include <cstdint>

namespace v2p {

// SplitMix64. Small state, fast, and the output sequence is fully pinned by
// the implementation, so seeded results are stable across platforms and
// standard-library versions (std::uniform_real_distribution is not).
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Uniform integer in [0, n). n must be > 0.
  int uniform_int(int n) { return static_cast<int>(next_u64() % static_cast<uint64_t>(n)); }

  // Standard normal via Box-Muller. No spare caching: every draw consumes
  // exactly two uniforms, which keeps substream alignment trivial.
  double normal() {
    double u1 = uniform01();
    double u2 = uniform01();
    // Guard log(0).
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  double normal(double mean, double sigma) { return mean + sigma * normal(); }

  bool chance(double p) { return uniform01() < p; }

 private:
  uint64_t state_;
};

// Deterministic substream derivation: mixes the tag words into the base seed
// one SplitMix64 step at a time. Used everywhere a per-env / per-candidate /
// per-episode stream is needed, so results do not depend on scheduling.
inline uint64_t derive_seed(uint64_t base, uint64_t a, uint64_t b = 0, uint64_t c = 0) {
  Rng mixer(base);
  uint64_t h = mixer.next_u64();
  h ^= a + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
  h = Rng(h).next_u64();
  h ^= b + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
  h = Rng(h).next_u64();
  h ^= c + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
  return Rng(h).next_u64();
}

}  // namespace v2p
