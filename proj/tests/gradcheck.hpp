#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "ntd/numcore/ops.hpp"
#include "ntd/numcore/rng.hpp"

namespace ntd::testing {

struct GradCheckResult {
  double max_rel_error = 0;  // worst over inputs of ||auto - fd|| / (||auto|| + ||fd||)
};

// Central finite differences (step h) on each input of a scalar function,
// compared against reverse-mode gradients. Runs in double precision.
inline GradCheckResult grad_check(const std::function<Tensor<double>(const std::vector<Tensor<double>>&)>& f,
                                  std::vector<Tensor<double>> inputs, double h = 1e-4) {
  for (auto& x : inputs) {
    x.set_requires_grad(true);
    x.zero_grad();
  }
  auto loss = f(inputs);
  backward(loss);
  GradCheckResult out;
  for (auto& x : inputs) {
    const auto analytic = x.grad();
    std::vector<double> numeric(x.size());
    auto data = x.mutable_data();
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double orig = data[i];
      data[i] = orig + h;
      double fp, fm;
      {
        NoGradGuard ng;
        fp = f(inputs).item();
      }
      data[i] = orig - h;
      {
        NoGradGuard ng;
        fm = f(inputs).item();
      }
      data[i] = orig;
      numeric[i] = (fp - fm) / (2 * h);
    }
    double diff = 0, na = 0, nn = 0;
    for (std::size_t i = 0; i < numeric.size(); ++i) {
      diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
      na += analytic[i] * analytic[i];
      nn += numeric[i] * numeric[i];
    }
    const double denom = std::sqrt(na) + std::sqrt(nn);
    // A parameter with no influence (e.g. a key bias under softmax) has both
    // gradients at rounding level; compare those absolutely.
    const double rel = denom > 1e-6 ? std::sqrt(diff) / denom : std::sqrt(diff);
    out.max_rel_error = std::max(out.max_rel_error, rel);
  }
  return out;
}

// Reduces any tensor to a scalar through a fixed random projection so every
// output element contributes a distinct weight.
inline Tensor<double> project(const Tensor<double>& y, std::uint64_t seed = 99) {
  Rng rng(seed);
  Tensor<double> w(y.shape(), rng.normal_vector<double>(y.size()));
  return sum(mul(y, w));
}

inline Tensor<double> randn(Shape s, Rng& rng, double stddev = 1.0) {
  const auto n = shape_size(s);
  return Tensor<double>(std::move(s), rng.normal_vector<double>(n, stddev));
}

}  // namespace ntd::testing
