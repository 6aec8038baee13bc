#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace saca {

// Deterministic random stream. The raw mt19937_64 output is mapped to
// doubles in-house so sequences are identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Uniform double in [lo, hi).
  double uniform(double lo = 0.0, double hi = 1.0) {
    const double u = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    return lo + (hi - lo) * u;
  }

  // Box-Muller normal deviate.
  double normal(double mean = 0.0, double stddev = 1.0) {
    if (have_spare_) {
      have_spare_ = false;
      return mean + stddev * spare_;
    }
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return mean + stddev * r * std::cos(theta);
  }

  // Integer in [0, n). Modulo mapping; bias is irrelevant at toy sizes.
  int uniform_int(int n) { return static_cast<int>(engine_() % static_cast<std::uint64_t>(n)); }

  std::uint64_t next_u64() { return engine_(); }

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace saca
