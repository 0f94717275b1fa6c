#pragma once

#include <cmath>
#include <cstdint>

namespace profiler {

// Counter-based generator built on the splitmix64 finalizer: the n-th output is
// mix(key + n*gamma). Substreams derive fresh keys from (key, stream index), so
// chain/fold/draw streams are independent of how many values the parent drew.
class Rng {
 public:
  explicit Rng(uint64_t seed) : key_(mix(mix(seed) ^ 0x9E3779B97F4A7C15ull)) {}

  Rng stream(uint64_t idx) const {
    Rng r(*this);
    r.key_ = mix(key_ ^ mix(idx + 0x94D049BB133111EBull));
    r.counter_ = 0;
    return r;
  }

  uint64_t next() { return mix(key_ + (++counter_) * 0x9E3779B97F4A7C15ull); }

  // strictly inside (0,1)
  double uniform() { return (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53; }

  // Box-Muller; consumes two uniforms per call, no cached spare
  double normal() {
    const double u = uniform(), v = uniform();
    return std::sqrt(-2.0 * std::log(u)) * std::cos(6.28318530717958647692 * v);
  }

  double exponential() { return -std::log(uniform()); }

  // Marsaglia-Tsang; shape > 0, rate > 0
  double gamma(double shape, double rate) {
    if (shape < 1.0) {
      const double u = uniform();
      return gamma(shape + 1.0, rate) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      const double x = normal();
      const double t = 1.0 + c * x;
      if (t <= 0.0) continue;
      const double v = t * t * t;
      const double u = uniform();
      if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) return d * v / rate;
    }
  }

 private:
  static uint64_t mix(uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  uint64_t key_;
  uint64_t counter_ = 0;
};

}  // namespace profiler
