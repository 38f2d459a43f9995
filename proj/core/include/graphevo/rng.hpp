#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <initializer_list>

namespace gevo {

/// Deterministic xoshiro256++ stream. Every stochastic decision in the
/// framework draws from a stream derived from (master seed, purpose, ids),
/// so results are reproducible bit-for-bit and independent of thread
/// scheduling.
class Rng {
 public:
  explicit Rng(uint64_t seed) { seed_from(seed); }

  /// Derives a stream from a key tuple, e.g. {seed, kPurposeEval, gen, id}.
  static Rng keyed(std::initializer_list<uint64_t> parts) {
    uint64_t h = 0x9e3779b97f4a7c15ull;
    for (uint64_t p : parts) {
      h ^= p + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
      h = splitmix(h);
    }
    return Rng(h);
  }

  uint64_t next_u64() {
    uint64_t const result = rotl(s_[0] + s_[3], 23) + s_[0];
    uint64_t const t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). n must be > 0.
  int uniform_int(int n) {
    return static_cast<int>(next_u64() % static_cast<uint64_t>(n));
  }

  /// Standard normal via the polar method (no cached spare).
  double normal() {
    for (;;) {
      double u = 2.0 * uniform() - 1.0;
      double v = 2.0 * uniform() - 1.0;
      double s = u * u + v * v;
      if (s > 0.0 && s < 1.0) return u * std::sqrt(-2.0 * std::log(s) / s);
    }
  }

  double normal(double mu, double sigma) { return mu + sigma * normal(); }

 private:
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  static uint64_t splitmix(uint64_t& x) {
    uint64_t z = (x += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  void seed_from(uint64_t seed) {
    for (auto& w : s_) w = splitmix(seed);
    if (s_[0] == 0 && s_[1] == 0 && s_[2] == 0 && s_[3] == 0) s_[0] = 1;
  }

  std::array<uint64_t, 4> s_{};
};

// Stream purposes; combined with the master seed, the generation index and
// entity ids to key independent substreams.
inline constexpr uint64_t kPurposeInit = 1;
inline constexpr uint64_t kPurposeEval = 2;
inline constexpr uint64_t kPurposeSpawn = 3;
inline constexpr uint64_t kPurposePrune = 4;
inline constexpr uint64_t kPurposeReset = 5;
inline constexpr uint64_t kPurposeSurrogate = 6;
inline constexpr uint64_t kPurposeEnv = 7;

}  // namespace gevo
