#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace photonkit {

// splitmix64; used to derive independent sub-stream seeds from a master seed.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Seedable, splittable random source. std::mt19937_64 output is fully
// specified by the standard, so streams are bit-identical across platforms;
// the std::*_distribution adapters are not, which is why the variate
// transforms below are written out explicitly.
//
// split(id) derives an independent stream from the *base* seed, not from the
// current engine state: consuming draws from one stream never changes
// another, so e.g. detector jitter draws stay put when the thinning
// efficiency changes.
class SplitRng {
 public:
  explicit SplitRng(std::uint64_t seed) : base_seed_(seed), engine_(mix64(seed)) {}

  SplitRng split(std::uint64_t stream_id) const {
    return SplitRng(mix64(base_seed_ ^ mix64(stream_id + 1)));
  }

  std::uint64_t next_u64() { return engine_(); }

  // uniform on [0, 1), 53-bit resolution
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  // uniform with both endpoints open, safe inside log()
  double uniform_open() {
    double u;
    do {
      u = uniform();
    } while (u <= 0.0);
    return u;
  }

  double exponential(double rate) { return -std::log(uniform_open()) / rate; }

  bool bernoulli(double p) { return uniform() < p; }

  double normal(double mean, double sigma) {
    // Box-Muller; the second variate is discarded to keep the stream
    // position a pure function of the call count.
    const double u1 = uniform_open();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    return mean + sigma * r * std::cos(6.283185307179586476925286766559 * u2);
  }

  // Knuth for small means, normal approximation above 256 (bootstrap count
  // synthesis only; event-time draws use exponential gaps instead).
  std::uint64_t poisson(double mean) {
    if (mean <= 0.0) return 0;
    if (mean < 256.0) {
      const double limit = std::exp(-mean);
      std::uint64_t k = 0;
      double prod = uniform();
      while (prod > limit) {
        ++k;
        prod *= uniform();
      }
      return k;
    }
    const double v = normal(mean, std::sqrt(mean));
    return v <= 0.0 ? 0 : static_cast<std::uint64_t>(std::llround(v));
  }

  std::uint64_t base_seed() const { return base_seed_; }

 private:
  std::uint64_t base_seed_;
  std::mt19937_64 engine_;
};

}  // namespace photonkit
