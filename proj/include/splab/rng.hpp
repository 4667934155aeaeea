#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

namespace splab {

// Deterministic RNG. Distributions are implemented by hand so that streams
// are identical across standard libraries, not just across runs.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  uint64_t uniform_index(uint64_t n) {
    // Rejection-free modulo is fine here: n is tiny compared to 2^64.
    return next_u64() % n;
  }

  // Standard normal via Box-Muller. One value per call, cached pair.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(t);
    have_spare_ = true;
    return r * std::cos(t);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  void fill_normal(float* dst, size_t n, double mean, double stddev) {
    for (size_t i = 0; i < n; ++i) {
      dst[i] = static_cast<float>(normal(mean, stddev));
    }
  }

  // Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      const size_t j = static_cast<size_t>(uniform_index(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // k distinct indices drawn uniformly from [0, n), in draw order.
  std::vector<size_t> sample_without_replacement(size_t n, size_t k) {
    std::vector<size_t> pool(n);
    for (size_t i = 0; i < n; ++i) pool[i] = i;
    std::vector<size_t> out;
    out.reserve(k);
    for (size_t i = 0; i < k; ++i) {
      const size_t j = i + static_cast<size_t>(uniform_index(n - i));
      std::swap(pool[i], pool[j]);
      out.push_back(pool[i]);
    }
    return out;
  }

 private:
  std::mt19937_64 gen_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace splab
