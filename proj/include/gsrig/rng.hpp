#pragma once

#include <cmath>
#include <cstdint>

namespace gsrig {

// SplitMix64 mixing step (Vigna / Steele et al.). Used both as the stream
// generator and as the seed-splitting hash, so derived streams are
// documented functions of (seed, index) and never depend on call order.
inline uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Derives an independent stream seed from (seed, index). Dataset
// generation, per-sample noise, and batch shuffles all split through this,
// which is what makes parallel generation order-independent.
inline uint64_t split_seed(uint64_t seed, uint64_t index) {
  uint64_t s = seed ^ (0x9E3779B97F4A7C15ULL * (index + 1));
  return splitmix64(s);
}

// Deterministic portable RNG: SplitMix64 stream + Box-Muller normals.
// Identical output on every platform (no std::distribution involved).
class Rng {
public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  Rng split(uint64_t index) const { return Rng(split_seed(state_, index)); }

  uint64_t next_u64() { return splitmix64(state_); }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  uint64_t uniform_index(uint64_t n) { return next_u64() % n; }

  // Standard normal via Box-Muller; caches the spare deviate.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

private:
  uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace gsrig
