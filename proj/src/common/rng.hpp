#pragma once

#include <cmath>
#include <cstdint>

namespace pagestore {

// splitmix64: tiny, seedable, stable across platforms. Used everywhere a
// frozen byte stream or a reproducible simulation is required.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  std::uint64_t below(std::uint64_t bound) { return bound ? next() % bound : 0; }

  // Uniform in [0,1).
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Box-Muller; hand-rolled so seeded simulations stay bit-stable.
  double normal(double mean, double sigma) {
    double u1 = uniform(), u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    return mean + sigma * z;
  }

  double lognormal(double median, double sigma) {
    return median * std::exp(normal(0.0, sigma));
  }

 private:
  std::uint64_t state_;
};

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  Rng r(a ^ (b * 0xD6E8FEB86659FD93ull));
  return r.next();
}

}  // namespace pagestore
