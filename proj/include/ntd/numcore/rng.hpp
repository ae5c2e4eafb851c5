#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

namespace ntd {

// Seeded generator used everywhere randomness enters; same seed and call
// sequence give identical draws on the same build.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  // Uniform integer in [0, n).
  std::size_t index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_); }
  std::uint64_t next_u64() { return engine_(); }

  template <typename T>
  std::vector<T> normal_vector(std::size_t n, double stddev = 1.0) {
    std::vector<T> v(n);
    for (auto& x : v) x = static_cast<T>(normal() * stddev);
    return v;
  }

  // Independent stream derived from this one.
  Rng fork() { return Rng(engine_()); }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace ntd
