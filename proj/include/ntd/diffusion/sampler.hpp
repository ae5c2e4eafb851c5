#pragma once

#include <cmath>
#include <vector>

#include "ntd/diffusion/head.hpp"

namespace ntd {

struct GuidanceConfig {
  double scale = 1.3;
  std::size_t steps = 10;

  void validate() const {
    if (steps < 1) throw ConfigError("sampler needs at least one step");
    if (scale < 0) throw ConfigError("guidance scale must be nonnegative");
  }
};

// eps_uncond + w (eps_cond - eps_uncond), evaluated as (1 - w) eps_uncond + w eps_cond
// so that w = 0 and w = 1 reproduce the branches exactly.
template <typename T>
Tensor<T> cfg_combine(const Tensor<T>& eps_cond, const Tensor<T>& eps_uncond, double w) {
  detail::check_same(eps_cond, eps_uncond, "cfg_combine");
  const T a = static_cast<T>(1.0 - w), b = static_cast<T>(w);
  std::vector<T> out(eps_cond.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * eps_uncond[i] + b * eps_cond[i];
  return Tensor<T>(eps_cond.shape(), std::move(out));
}

template <typename T>
Tensor<T> cfg_predict(const DiffusionHead<T>& head, const Tensor<T>& z_t, const std::vector<double>& t,
                      const Tensor<T>& cond, double w) {
  NoGradGuard ng;
  const auto ec = head(z_t, t, cond);
  const auto eu = head(z_t, t, head.uncond_rows(z_t.dim(0)));
  return cfg_combine(ec, eu, w);
}

// Integer timesteps for `steps` model evaluations, uniform in lambda from
// the schedule's first sampling step down to t = 1 and strictly decreasing.
inline std::vector<std::size_t> sampler_timesteps(const NoiseSchedule& sched, std::size_t steps) {
  if (steps < 1) throw ConfigError("sampler needs at least one step");
  const double hi = sched.lambda(sched.first_sample_step()), lo = sched.lambda(1);
  std::vector<std::size_t> ts;
  for (std::size_t i = 0; i < steps; ++i) {
    const double lam = steps == 1 ? hi : hi + (lo - hi) * static_cast<double>(i) / static_cast<double>(steps - 1);
    std::size_t t = sched.timestep_for_lambda(lam);
    if (!ts.empty() && t >= ts.back()) t = ts.back() - 1;
    if (t < 1) throw ConfigError("too many sampler steps for the schedule");
    ts.push_back(t);
  }
  return ts;
}

// Deterministic multistep DPM-Solver++ (2nd order, data prediction). Starts
// from x ~ N(0, I) at the first sampling step, evaluates eps_fn at each timestep, converts to
// x0 = (x - sigma eps) / alpha, and moves between timesteps with the 2M
// update. Returns the x0 estimate from the final evaluation.
// eps_fn: (x [B x D], t) -> eps [B x D].
template <typename T, typename EpsFn>
Tensor<T> dpm_solver_sample(const EpsFn& eps_fn, std::size_t batch, std::size_t dim, std::size_t steps,
                            const NoiseSchedule& sched, Rng& rng) {
  NoGradGuard ng;
  const auto ts = sampler_timesteps(sched, steps);
  std::vector<T> x = rng.normal_vector<T>(batch * dim);
  std::vector<T> x0(batch * dim), prev_x0;
  double prev_h = 0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const std::size_t t = ts[i];
    const double a = sched.alpha(t), s = sched.sigma(t);
    const auto eps = eps_fn(Tensor<T>({batch, dim}, x), t);
    if (eps.size() != x.size()) throw ShapeError("sampler: predictor returned the wrong shape");
    for (std::size_t k = 0; k < x.size(); ++k) x0[k] = static_cast<T>((x[k] - s * eps[k]) / a);
    if (i + 1 == ts.size()) break;
    const std::size_t tn = ts[i + 1];
    const double an = sched.alpha(tn), sn = sched.sigma(tn);
    const double h = sched.lambda(tn) - sched.lambda(t);
    std::vector<T> d = x0;
    if (!prev_x0.empty()) {
      const double r = prev_h / h;
      for (std::size_t k = 0; k < d.size(); ++k)
        d[k] = static_cast<T>((1 + 0.5 / r) * x0[k] - (0.5 / r) * prev_x0[k]);
    }
    const double phi = std::expm1(-h);  // e^{-h} - 1
    for (std::size_t k = 0; k < x.size(); ++k) x[k] = static_cast<T>((sn / s) * x[k] - an * phi * d[k]);
    prev_x0 = x0;
    prev_h = h;
  }
  return Tensor<T>({batch, dim}, std::move(x0));
}

// One latent for hidden state `cond` [1 x cond_dim] with classifier-free guidance.
template <typename T>
std::vector<float> sample_latent_frame(const DiffusionHead<T>& head, const Tensor<T>& cond,
                                       const GuidanceConfig& g, const NoiseSchedule& sched, Rng& rng) {
  g.validate();
  const auto z = dpm_solver_sample<T>(
      [&](const Tensor<T>& x, std::size_t t) {
        return cfg_predict(head, x, std::vector<double>(x.dim(0), double(t)), cond, g.scale);
      },
      1, head.config().latent_dim, g.steps, sched, rng);
  return {z.values().begin(), z.values().end()};
}

}  // namespace ntd
