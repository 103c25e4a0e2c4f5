#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace embr {

inline uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline uint64_t hash_string(std::string_view s) {
  // FNV-1a
  uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<uint8_t>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Deterministic seeded random source (xoshiro256**). All randomness in the
// toolkit flows through instances of this class; substreams derived from a
// parent are independent of the parent's consumption, so per-robot/per-tick
// derivation is interleaving-free.
class Rng {
 public:
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

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Inclusive on both ends.
  int uniform_int(int lo, int hi) {
    return lo + static_cast<int>(next_u64() % static_cast<uint64_t>(hi - lo + 1));
  }

  // Standard normal via Box-Muller; consumes exactly two uniforms per call.
  double gauss() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
  }

  double gauss(double mean, double sigma) { return mean + sigma * gauss(); }

  Rng substream(uint64_t key) const {
    uint64_t s = state_[0] ^ (key * 0x9e3779b97f4a7c15ULL);
    uint64_t mix = splitmix64(s);
    return Rng(mix ^ key);
  }

  Rng substream(std::string_view name) const { return substream(hash_string(name)); }

 private:
  static constexpr double kTwoPi = 6.28318530717958647692;

  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  uint64_t state_[4];
};

// Stateless stream derivation for per-tick sensor noise: the result depends
// only on the keys, never on how much any other stream has consumed.
inline Rng derive_rng(uint64_t master_seed, std::string_view scope, uint64_t a = 0,
                      uint64_t b = 0) {
  uint64_t s = master_seed;
  uint64_t h = splitmix64(s) ^ hash_string(scope);
  s = h ^ (a * 0xd6e8feb86659fd93ULL);
  h = splitmix64(s) ^ (b * 0xa5a5a5a5a5a5a5a5ULL);
  s = h;
  return Rng(splitmix64(s));
}

}  // namespace embr
