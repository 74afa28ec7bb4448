#pragma once

#include <cmath>
#include <cstdint>

namespace fae {

// Counter-based splittable PRNG. Each draw is a pure function of (key, counter),
// so substreams derived from indices are order-independent: parallel consumers
// keyed by (seed, path index) or (seed, step, sample, draw) produce identical
// values regardless of scheduling.
class Rng {
 public:
  explicit Rng(uint64_t key) : key_(key) {}

  // Child stream for index `idx`; statistically independent of the parent and
  // of siblings, deterministic in (key, idx).
  Rng substream(uint64_t idx) const {
    return Rng(mix(key_ ^ 0x9e3779b97f4a7c15ull, mix(idx, 0xbf58476d1ce4e5b9ull)));
  }

  uint64_t next_u64() { return mix(key_, ++counter_); }

  // Uniform on (0,1]; never returns 0 so log() is safe.
  double next_uniform() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller; the paired draw is cached.
  double next_gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = next_uniform();
    double u2 = next_uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  // Uniform integer in [0, n).
  uint64_t next_below(uint64_t n) {
    // Multiply-shift rejection-free mapping; bias < 2^-64, irrelevant here.
    return static_cast<uint64_t>((static_cast<__uint128_t>(next_u64()) * n) >> 64);
  }

 private:
  static uint64_t mix(uint64_t key, uint64_t ctr) {
    uint64_t z = key + ctr * 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  uint64_t key_;
  uint64_t counter_ = 0;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace fae
