#pragma once

#include <cstdint>

namespace mpmflow {

// PCG32 (Melissa O'Neill's minimal variant). Used everywhere a seeded stream
// is needed so results do not depend on the standard library's distribution
// implementations.
struct Pcg32 {
  std::uint64_t state = 0x853c49e6748fea9bull;
  std::uint64_t inc = 0xda3e39cb94b95bdbull;

  explicit Pcg32(std::uint64_t seed = 0x853c49e6748fea9bull,
                 std::uint64_t stream = 1) {
    state = 0;
    inc = (stream << 1u) | 1u;
    next();
    state += seed;
    next();
  }

  std::uint32_t next() {
    std::uint64_t old = state;
    state = old * 6364136223846793005ull + inc;
    std::uint32_t xorshifted =
        static_cast<std::uint32_t>(((old >> 18u) ^ old) >> 27u);
    std::uint32_t rot = static_cast<std::uint32_t>(old >> 59u);
    return (xorshifted >> rot) | (xorshifted << ((32u - rot) & 31u));
  }

  // Uniform in [0, 1) with 32-bit resolution.
  double uniform() { return next() * (1.0 / 4294967296.0); }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  float uniform_f(float lo, float hi) {
    return lo + (hi - lo) * static_cast<float>(uniform());
  }

  // Uniform integer in [0, n).
  std::uint32_t bounded(std::uint32_t n) {
    // Lemire's multiply-shift rejection-free variant would bias for huge n;
    // plain modulo bias is < 2^-32 * n which is fine for our n.
    return n ? next() % n : 0;
  }
};

}  // namespace mpmflow
