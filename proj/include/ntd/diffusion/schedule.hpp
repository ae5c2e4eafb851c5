#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "ntd/errors.hpp"

namespace ntd {

// Discrete DDPM schedule: alpha_bar[0] = 1, strictly decreasing to alpha_bar[T] > 0.
struct NoiseSchedule {
  std::size_t T = 0;
  std::vector<double> alpha_bar;
  std::size_t sample_start = 0;  // first sampler timestep; 0 means T

  // Cosine schedule (offset s) built from clipped per-step betas so every
  // entry stays positive and strictly decreasing.
  static NoiseSchedule cosine(std::size_t steps = 1000, double s = 0.008, double max_beta = 0.999) {
    if (steps < 1) throw ConfigError("noise schedule needs at least one step");
    auto f = [&](double t) {
      const double c = std::cos((t / steps + s) / (1 + s) * M_PI / 2);
      return c * c;
    };
    NoiseSchedule n;
    n.T = steps;
    n.alpha_bar.resize(steps + 1);
    n.alpha_bar[0] = 1.0;
    for (std::size_t t = 1; t <= steps; ++t) {
      const double beta = std::min(1.0 - f(double(t)) / f(double(t - 1)), max_beta);
      n.alpha_bar[t] = n.alpha_bar[t - 1] * (1.0 - beta);
    }
    // Near t = T alpha is ~1e-4 and x0 = (z - sigma eps) / alpha magnifies any
    // error in a learned eps by that factor. Sampling starts where the
    // continuous cosine schedule has t = 0.9946 instead (alpha ~ 0.0084),
    // the usual truncation for this schedule.
    const double c = std::cos((0.9946 + s) / (1 + s) * M_PI / 2) / std::cos(s / (1 + s) * M_PI / 2);
    n.sample_start = n.timestep_for_lambda(std::log(c / std::sqrt(1 - c * c)));
    return n;
  }

  std::size_t first_sample_step() const { return sample_start ? sample_start : T; }

  void check(std::size_t t) const {
    if (t > T) throw ContractError("timestep " + std::to_string(t) + " outside [0, " + std::to_string(T) + "]");
  }

  double alpha(std::size_t t) const {
    check(t);
    return std::sqrt(alpha_bar[t]);
  }
  double sigma(std::size_t t) const {
    check(t);
    return std::sqrt(1.0 - alpha_bar[t]);
  }
  // Half log signal-to-noise ratio; +inf at t = 0.
  double lambda(std::size_t t) const {
    check(t);
    return 0.5 * std::log(alpha_bar[t] / (1.0 - alpha_bar[t]));
  }

  // Integer timestep in [1, T] whose lambda is closest to `lam`.
  std::size_t timestep_for_lambda(double lam) const {
    std::size_t best = 1;
    double err = std::abs(lambda(1) - lam);
    for (std::size_t t = 2; t <= T; ++t) {
      const double e = std::abs(lambda(t) - lam);
      if (e < err) {
        err = e;
        best = t;
      }
    }
    return best;
  }
};

// z_t = sqrt(alpha_bar[t]) z0 + sqrt(1 - alpha_bar[t]) eps
template <typename V>
std::vector<V> forward_noising(const NoiseSchedule& sched, const std::vector<V>& z0, std::size_t t,
                               const std::vector<V>& eps) {
  sched.check(t);
  if (z0.size() != eps.size()) throw ShapeError("forward_noising: z0 and eps differ in length");
  const double a = sched.alpha(t), s = sched.sigma(t);
  std::vector<V> out(z0.size());
  for (std::size_t i = 0; i < z0.size(); ++i) out[i] = static_cast<V>(a * z0[i] + s * eps[i]);
  return out;
}

}  // namespace ntd
