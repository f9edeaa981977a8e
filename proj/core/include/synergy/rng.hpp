#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>

#include "synergy/errors.hpp"

namespace synergy {

// splitmix64 step; used for seeding and stream derivation.
inline uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Named sub-streams derived from one master seed. Every consumer of
// randomness draws from its own stream so that enabling/disabling one
// component never shifts the draws seen by another.
enum class RngStream : uint64_t {
  ModelInit = 1,
  StreamOrder = 2,
  Reservoir = 3,
  Replay = 4,
  SemanticGate = 5,
  FisherGate = 6,
  TaskParams = 7,
  DataGen = 8,
};

inline uint64_t derive_seed(uint64_t master, uint64_t salt) {
  uint64_t s = master ^ (0x632be59bd9b4e019ull + salt * 0x9e3779b97f4a7c15ull);
  uint64_t a = splitmix64(s);
  uint64_t b = splitmix64(s);
  return a ^ (b << 1);
}

inline uint64_t derive_seed(uint64_t master, RngStream stream) {
  return derive_seed(master, static_cast<uint64_t>(stream));
}

// xoshiro256** with splitmix64 seeding. Hand-rolled (and all integer/real
// draws below hand-rolled too) so results are bit-stable across platforms
// and standard-library versions.
class Rng {
 public:
  Rng() : Rng(0) {}
  explicit Rng(uint64_t seed) {
    uint64_t s = seed;
    for (auto& w : state_) w = splitmix64(s);
  }

  uint64_t next_u64() {
    const uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform double in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Unbiased integer in [0, n) via rejection sampling.
  uint64_t uniform_int(uint64_t n) {
    if (n == 0) throw ConfigError("uniform_int: n must be positive");
    const uint64_t threshold = (0 - n) % n;  // 2^64 mod n
    for (;;) {
      uint64_t x = next_u64();
      if (x >= threshold) return x % n;
    }
  }

  // Standard normal via Box-Muller (two uniforms per draw, no cached spare).
  double normal() {
    double u1 = uniform();
    while (u1 == 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  std::array<uint64_t, 4> state() const { return state_; }
  void set_state(const std::array<uint64_t, 4>& s) { state_ = s; }

 private:
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  std::array<uint64_t, 4> state_{};
};

// In-place Fisher-Yates shuffle.
template <typename T>
void shuffle(std::span<T> items, Rng& rng) {
  for (size_t i = items.size(); i > 1; --i) {
    const size_t j = static_cast<size_t>(rng.uniform_int(i));
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace synergy
