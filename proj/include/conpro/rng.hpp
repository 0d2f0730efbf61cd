#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "conpro/tensor.hpp"

namespace conpro {

// Deterministic random source. The engine is std::mt19937_64 (bit-exact by
// the standard); every distribution transform is spelled out here instead of
// using std:: distributions, whose output is implementation-defined.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  uint64_t next_u64() { return eng_(); }

  // [0,1) with 53 bits
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  // strictly inside (0,1); safe as a log() argument
  double uniform_open() { return (static_cast<double>(eng_() >> 11) + 0.5) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller, no caching so the draw count per call is fixed
  double normal() {
    double u1 = uniform_open();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  double exponential() { return -std::log(uniform_open()); }

  int64_t uniform_int(int64_t n) {
    // modulo bias is irrelevant at the magnitudes used here
    return static_cast<int64_t>(eng_() % static_cast<uint64_t>(n));
  }

  Tensor normal_tensor(Shape shape, double stddev = 1.0, double mean = 0.0) {
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.size(); ++i) t[i] = mean + stddev * normal();
    return t;
  }

  Tensor uniform_tensor(Shape shape, double lo, double hi) {
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.size(); ++i) t[i] = uniform(lo, hi);
    return t;
  }

 private:
  std::mt19937_64 eng_;
};

// splitmix64 finalizer; used to derive independent child streams from
// (seed, tag) pairs so generation order never matters.
inline uint64_t mix_seed(uint64_t a, uint64_t b) {
  uint64_t z = a + 0x9e3779b97f4a7c15ull * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline uint64_t mix_seed(uint64_t a, uint64_t b, uint64_t c) { return mix_seed(mix_seed(a, b), c); }

}  // namespace conpro
