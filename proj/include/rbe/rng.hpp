#pragma once

#include <cstdint>

#include "rbe/tensor.hpp"

namespace rbe {

// Deterministic 64-bit generator with a splitmix-style update:
//   state += 0x9E3779B97F4A7C15       (odd constant, golden-ratio increment)
//   output = mix(state)               (xor-shift-multiply finalizer)
// The stream id is scrambled through the same finalizer and xor-ed into
// the seed so distinct streams decorrelate. The exact update is part of
// the output-reproducibility contract; see README.
class Rng {
 public:
  explicit Rng(uint64_t seed, uint64_t stream = 0)
      : state_(seed ^ mix(stream * 0x9E3779B97F4A7C15ULL + 0xBF58476D1CE4E5B9ULL)) {}

  static uint64_t mix(uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ULL;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBULL;
    z ^= z >> 31;
    return z;
  }

  uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    return mix(state_);
  }

  // Uniform in [0, 1), 53 mantissa bits.
  double next_uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Standard normal via Box-Muller over two uniforms (no caching: exactly
  // two uniforms consumed per call).
  double next_gaussian() {
    double u1 = next_uniform();
    double u2 = next_uniform();
    double r = std::sqrt(-2.0 * std::log(1.0 - u1));  // 1-u1 in (0,1] so log is finite
    return r * std::cos(2.0 * M_PI * u2);
  }

  // Row-major fill.
  Image fill_gaussian(Shape3 shape) {
    Image img(shape);
    for (auto& x : img.v) x = next_gaussian();
    return img;
  }

  Vec gaussian_vec(int n) {
    Vec v(static_cast<size_t>(n));
    for (auto& x : v) x = next_gaussian();
    return v;
  }

 private:
  uint64_t state_;
};

}  // namespace rbe
