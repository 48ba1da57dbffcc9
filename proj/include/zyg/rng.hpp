#pragma once

// Seeded sampling helpers. Uniform doubles are derived from raw mt19937_64
// output (not std distributions), so identical seeds give identical streams
// on every platform.

#include <cstdint>
#include <random>

#include "zyg/dyadic.hpp"

namespace zyg {

inline uint64_t splitmix64(uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Derive an independent stream id from (seed, tag); used for per-chunk and
// per-scale reseeding so results do not depend on thread scheduling.
inline uint64_t derive_seed(uint64_t seed, uint64_t tag) {
  return splitmix64(seed ^ splitmix64(tag));
}

class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  uint64_t raw() { return eng_(); }

  // uniform in [0, 1)
  double uniform01() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double a, double b) { return a + (b - a) * uniform01(); }

  // uniform in {0, ..., n-1} (n small; modulo bias negligible for sampling)
  uint64_t index(uint64_t n) { return eng_() % n; }

  int uniform_int(int lo, int hi) {  // inclusive bounds
    return lo + static_cast<int>(index(static_cast<uint64_t>(hi - lo + 1)));
  }

  double gaussian() {
    // Box-Muller on the deterministic uniforms
    double u1 = uniform01(), u2 = uniform01();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
  }

  Point point_in(const Box& b) {
    Point p(b.dim());
    for (int i = 0; i < b.dim(); ++i) p[i] = uniform(b.lo[i], b.hi[i]);
    return p;
  }

  Point unit_vector(int dim) {
    while (true) {
      Point v(dim);
      for (int i = 0; i < dim; ++i) v[i] = gaussian();
      double n = norm(v);
      if (n > 1e-8) return (1.0 / n) * v;
    }
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace zyg
