#pragma once

// Counter-keyed random streams. Every (master seed, k1, k2, k3) tuple yields
// an independent xoshiro256++ stream, so simulation replicates can be run in
// any order (or in parallel) and still produce identical draws.

#include <cmath>
#include <cstdint>

namespace dyadnet {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

class Rng {
 public:
  explicit Rng(std::uint64_t master, std::uint64_t k1 = 0, std::uint64_t k2 = 0,
               std::uint64_t k3 = 0) {
    std::uint64_t st = master;
    st = splitmix64(st) ^ (k1 * 0x9e3779b97f4a7c15ULL);
    st = splitmix64(st) ^ (k2 * 0xc2b2ae3d27d4eb4fULL);
    st = splitmix64(st) ^ (k3 * 0x165667b19e3779f9ULL);
    for (auto& w : s_) w = splitmix64(st);
    if ((s_[0] | s_[1] | s_[2] | s_[3]) == 0) s_[0] = 1;
  }

  std::uint64_t next() {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // uniform on [0,1)
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // standard normal via Box-Muller (second draw cached)
  double normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double rad = std::sqrt(-2.0 * std::log(u1));
    const double ang = 6.28318530717958647692528676655900577 * u2;
    cached_ = rad * std::sin(ang);
    have_cached_ = true;
    return rad * std::cos(ang);
  }

  bool bernoulli(double p = 0.5) { return uniform() < p; }

  // uniform integer on [0, m), rejection-sampled to remove modulo bias
  int uniform_int(int m) {
    const std::uint64_t bound = static_cast<std::uint64_t>(m);
    const std::uint64_t limit = ~0ULL - ~0ULL % bound;
    std::uint64_t x = 0;
    do {
      x = next();
    } while (x >= limit);
    return static_cast<int>(x % bound);
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }
  std::uint64_t s_[4];
  double cached_ = 0.0;
  bool have_cached_ = false;
};

}  // namespace dyadnet
