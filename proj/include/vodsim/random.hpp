#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace vodsim {

// Seeded generator plus the handful of draws the simulator needs. The
// variates are computed here from raw 64-bit output rather than through
// <random> distributions so sequences are identical across standard
// library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1) with 53 bits of precision.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Uniform on (0, 1]; safe to take the log of.
  double uniform_open0() { return 1.0 - uniform(); }

  double exponential(double mean) { return -mean * std::log(uniform_open0()); }

  // Geometric on {0, 1, 2, ...} with the given mean.
  std::uint64_t geometric(double mean) {
    if (mean <= 0.0) return 0;
    const double p = 1.0 / (mean + 1.0);
    return static_cast<std::uint64_t>(std::floor(std::log(uniform_open0()) / std::log1p(-p)));
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : static_cast<std::uint64_t>(uniform() * static_cast<double>(n)); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace vodsim
