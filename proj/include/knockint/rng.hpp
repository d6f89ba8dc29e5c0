#pragma once

// Deterministic, portable random number generation.
//
// Core generator is xoshiro256++ (Blackman & Vigna, 2019), seeded through
// the splitmix64 expander. All derived quantities (uniform doubles, bounded
// integers, normals) are defined here in terms of the raw 64-bit output
// stream, so any implementation of xoshiro256++ in any language reproduces
// the exact same values from the same seed. Substreams are keyed off
// (seed, key) so per-column / per-row streams are independent of iteration
// order and worker count.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>

namespace knockint {

// splitmix64 finalizer step; also used to derive substream seeds.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Combines a base seed with a stream key into a fresh 64-bit seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t key) {
  return mix64(seed ^ mix64(key ^ 0xA3C59AC2F1039EB7ULL));
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed) {
    // splitmix64 sequence expands the seed into the 256-bit state.
    std::uint64_t z = seed;
    for (auto& word : state_) {
      z += 0x9E3779B97F4A7C15ULL;
      std::uint64_t s = z;
      s = (s ^ (s >> 30)) * 0xBF58476D1CE4E5B9ULL;
      s = (s ^ (s >> 27)) * 0x94D049BB133111EBULL;
      word = s ^ (s >> 31);
    }
  }

  // Independent stream for (seed, key); order of creation is irrelevant.
  Rng substream(std::uint64_t key) const { return Rng(derive_seed(seed_, key)); }

  std::uint64_t seed() const { return seed_; }

  // xoshiro256++ step.
  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform in [0, 1): top 53 bits scaled by 2^-53.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n) by bitmask rejection (no modulo bias).
  std::uint64_t bounded(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("Rng::bounded: n must be positive");
    if (n == 1) return 0;
    std::uint64_t mask = n - 1;
    mask |= mask >> 1;
    mask |= mask >> 2;
    mask |= mask >> 4;
    mask |= mask >> 8;
    mask |= mask >> 16;
    mask |= mask >> 32;
    std::uint64_t v;
    do {
      v = next_u64() & mask;
    } while (v >= n);
    return v;
  }

  // Standard normal via Box-Muller (cosine branch; two uniforms per draw).
  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1], keeps log finite
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  std::uint64_t state_[4];
  std::uint64_t seed_;
};

}  // namespace knockint
