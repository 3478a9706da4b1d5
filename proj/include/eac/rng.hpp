#pragma once

#include <cmath>
#include <cstdint>

namespace eac {

// Deterministic xoshiro256** generator. Standard-library distributions are
// implementation-defined, so anything that must reproduce byte-identical
// results across platforms (Gumbel sampling, test corpora) goes through this.
class Rng {
 public:
  explicit Rng(uint64_t seed) {
    // splitmix64 seeding
    uint64_t x = seed;
    for (auto& word : state_) {
      x += 0x9E3779B97F4A7C15ull;
      uint64_t z = x;
      z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
      z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
      word = z ^ (z >> 31);
    }
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

  // Uniform in [0, bound). Rejection-free modulo is fine here: bound is tiny
  // compared to 2^64 and bias is far below anything observable.
  uint64_t next_below(uint64_t bound) { return next_u64() % bound; }

  // Uniform integer in [lo, hi] inclusive.
  int64_t next_int(int64_t lo, int64_t hi) {
    return lo + static_cast<int64_t>(next_below(static_cast<uint64_t>(hi - lo + 1)));
  }

  // Uniform in [0, 1) with 53-bit resolution.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Open-interval uniform, safe as a log() argument.
  double next_open_double() {
    double u = next_double();
    return u > 0.0 ? u : 0x1.0p-53;
  }

  double next_gumbel() { return -std::log(-std::log(next_open_double())); }

  // Marsaglia polar method with cached second value.
  double next_gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * next_double() - 1.0;
      v = 2.0 * next_double() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double m = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * m;
    has_spare_ = true;
    return u * m;
  }

 private:
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  uint64_t state_[4] = {};
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace eac
