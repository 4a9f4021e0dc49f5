#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>

namespace fsmle {

// Derives independent streams from (master seed, replication index, stream tag).
// Mixing uses the splitmix64 finalizer so that neighbouring indices land far
// apart; the engine itself is mt19937_64, which the standard pins down bit for
// bit.  All variate transforms below are written out explicitly instead of
// using std::*_distribution, whose output is implementation defined.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t stream_seed(std::uint64_t master, std::uint64_t index,
                                 std::uint64_t tag) {
  std::uint64_t s = mix64(master);
  s = mix64(s ^ mix64(index * 0xd1342543de82ef95ULL + 1));
  s = mix64(s ^ mix64(tag * 0xaf251af3b0f025b5ULL + 1));
  return s;
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}
  Rng(std::uint64_t master, std::uint64_t index, std::uint64_t tag)
      : eng_(stream_seed(master, index, tag)) {}

  std::uint64_t u64() { return eng_(); }

  // Uniform on (0,1): 53-bit mantissa, never exactly 0 or 1.
  double uniform() {
    return (static_cast<double>(eng_() >> 11) + 0.5) * 0x1.0p-53;
  }

  double normal() {
    // Box-Muller, one variate per pair of uniforms; wasteful but stateless.
    double u1 = uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(6.283185307179586476925286766559 * u2);
  }

  double exponential() { return -std::log(uniform()); }

  double laplace(double scale) {
    double u = uniform() - 0.5;
    return -scale * std::copysign(std::log(1.0 - 2.0 * std::fabs(u)), -u);
  }

  bool bernoulli(double prob) { return uniform() < prob; }

  // Marsaglia-Tsang; the alpha < 1 case boosts through alpha + 1.
  double gamma(double alpha) {
    if (alpha <= 0.0) throw std::invalid_argument("gamma: alpha <= 0");
    if (alpha < 1.0) {
      double g = gamma(alpha + 1.0);
      return g * std::pow(uniform(), 1.0 / alpha);
    }
    double d = alpha - 1.0 / 3.0;
    double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x = normal();
      double v = 1.0 + c * x;
      if (v <= 0.0) continue;
      v = v * v * v;
      double u = uniform();
      if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) {
        return d * v;
      }
    }
  }

  double chi_squared(double df) { return 2.0 * gamma(0.5 * df); }

  double student_t(double df) {
    return normal() / std::sqrt(chi_squared(df) / df);
  }

  // Exact Poisson: Knuth product method, halving large means first so the
  // product never underflows.
  long poisson(double mean) {
    if (mean < 0.0) throw std::invalid_argument("poisson: mean < 0");
    if (mean > 30.0) {
      double half = 0.5 * mean;
      return poisson(half) + poisson(mean - half);
    }
    double limit = std::exp(-mean);
    double prod = 1.0;
    long k = -1;
    do {
      ++k;
      prod *= uniform();
    } while (prod > limit);
    return k;
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace fsmle
