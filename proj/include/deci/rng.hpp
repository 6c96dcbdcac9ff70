#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace deci::num {

// Seeded random stream. All distributions are derived from mt19937_64 output
// with fixed arithmetic, so a given seed yields the same draw sequence on any
// standard-conforming platform.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

  std::uint64_t next_u64() {
    ++counter_;
    return engine_();
  }

  // Uniform on (0, 1); never returns 0 or 1 exactly.
  double uniform() {
    double u = (next_u64() >> 11) * 0x1.0p-53;
    return u == 0.0 ? 0x1.0p-53 : u;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller, cosine branch only (keeps the stream position predictable).
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  double exponential() { return -std::log(uniform()); }

  double gumbel() { return -std::log(-std::log(uniform())); }

  // Logistic noise: the difference of two independent Gumbels.
  double logistic() {
    double u = uniform();
    return std::log(u) - std::log1p(-u);
  }

  std::size_t categorical(const std::vector<double>& probs) {
    double u = uniform();
    double acc = 0.0;
    for (std::size_t k = 0; k + 1 < probs.size(); ++k) {
      acc += probs[k];
      if (u < acc) return k;
    }
    return probs.empty() ? 0 : probs.size() - 1;
  }

  std::size_t uniform_index(std::size_t n) {
    return static_cast<std::size_t>(next_u64() % n);
  }

  // Independent child stream; distinct tags give decorrelated streams.
  RngStream child(std::uint64_t tag) const {
    std::uint64_t x = seed_ ^ (0x9e3779b97f4a7c15ULL * (tag + 1));
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ULL;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebULL;
    x ^= x >> 31;
    return RngStream(x);
  }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
  std::mt19937_64 engine_;
};

}  // namespace deci::num
