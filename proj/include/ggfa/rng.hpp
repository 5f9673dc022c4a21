#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "ggfa/stats.hpp"

namespace ggfa {

// Deterministic RNG: the engine (mt19937_64) is fully specified by the
// standard and all variate transforms are our own, so streams are
// reproducible across platforms and toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t u64() { return eng_(); }

  // Uniform on [0,1).
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  // Uniform on (0,1), never returning an exact endpoint.
  double uniform_open() {
    return (static_cast<double>(eng_() >> 11) + 0.5) * 0x1.0p-53;
  }

  double normal() { return normal_quantile(uniform_open()); }

  double exponential(double rate = 1.0) {
    return -std::log1p(-uniform()) / rate;
  }

  // Marsaglia-Tsang squeeze for shape >= 1; boosted for shape < 1.
  double gamma(double shape, double rate = 1.0) {
    if (shape < 1.0) {
      double u = uniform_open();
      return gamma(shape + 1.0, rate) * std::pow(u, 1.0 / shape);
    }
    double d = shape - 1.0 / 3.0;
    double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      double u = uniform_open();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v / rate;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v / rate;
    }
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace ggfa
