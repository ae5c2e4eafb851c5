#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "ntd/diffusion/schedule.hpp"
#include "ntd/numcore/layers.hpp"

namespace ntd {

// Sinusoidal embedding of (possibly fractional) timesteps: [cos(t f_i), sin(t f_i)].
template <typename T>
Tensor<T> timestep_embedding(const std::vector<double>& t, std::size_t dim) {
  const std::size_t half = dim / 2;
  std::vector<T> v(t.size() * dim, T(0));
  for (std::size_t r = 0; r < t.size(); ++r)
    for (std::size_t i = 0; i < half; ++i) {
      const double f = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
      v[r * dim + i] = static_cast<T>(std::cos(t[r] * f));
      v[r * dim + half + i] = static_cast<T>(std::sin(t[r] * f));
    }
  return Tensor<T>({t.size(), dim}, std::move(v));
}

struct DiffusionHeadConfig {
  std::size_t latent_dim = 16;
  std::size_t cond_dim = 128;
  std::size_t width = 128;
  std::size_t blocks = 4;
  std::size_t time_dim = 64;
};

// Noise predictor conditioned on a hidden state: residual MLP blocks with
// adaptive layer-norm modulation (shift, scale, gate) from the conditioning
// vector and the timestep embedding.
template <typename T = float>
class DiffusionHead {
 public:
  DiffusionHead() = default;
  DiffusionHead(const DiffusionHeadConfig& cfg, Rng& rng)
      : cfg_(cfg),
        cond_proj_(cfg.cond_dim, cfg.width, rng),
        time_in_(cfg.time_dim, cfg.width, rng),
        time_out_(cfg.width, cfg.width, rng),
        input_(cfg.latent_dim, cfg.width, rng),
        final_mod_(cfg.width, 2 * cfg.width, rng, true, 0.5),
        output_(cfg.width, cfg.latent_dim, rng),
        uncond_(param_normal<T>({cfg.cond_dim}, rng, 0.02)) {
    if (cfg.blocks < 1) throw ConfigError("diffusion head needs at least one block");
    for (std::size_t b = 0; b < cfg.blocks; ++b)
      blocks_.push_back({Linear<T>(cfg.width, 3 * cfg.width, rng, true, 0.5), Linear<T>(cfg.width, cfg.width, rng),
                         Linear<T>(cfg.width, cfg.width, rng)});
  }

  const DiffusionHeadConfig& config() const { return cfg_; }
  // Learned null conditioning used for the unconditional branch.
  const Tensor<T>& uncond() const { return uncond_; }

  // z_t [B x latent], timesteps (B), cond [B x cond_dim] -> eps_hat [B x latent]
  Tensor<T> operator()(const Tensor<T>& z_t, const std::vector<double>& t, const Tensor<T>& cond) const {
    const std::size_t B = z_t.dim(0), W = cfg_.width;
    if (z_t.dim(1) != cfg_.latent_dim) throw ShapeError("diffusion head: latent width mismatch");
    if (cond.dim(0) != B || cond.dim(1) != cfg_.cond_dim || t.size() != B)
      throw ShapeError("diffusion head: conditioning/timesteps do not match batch");
    auto c = silu(add(cond_proj_(cond), time_out_(silu(time_in_(timestep_embedding<T>(t, cfg_.time_dim))))));
    auto x = input_(z_t);
    for (const auto& b : blocks_) {
      auto m = b.mod(c);
      auto shift = slice_cols(m, 0, W), scl = slice_cols(m, W, W), gate = slice_cols(m, 2 * W, W);
      auto h = add(mul(layer_norm(x, Tensor<T>{}, Tensor<T>{}, Axis::Rows), add_scalar(scl, T(1))), shift);
      x = add(x, mul(gate, b.l2(silu(b.l1(h)))));
    }
    auto m = final_mod_(c);
    auto h = add(mul(layer_norm(x, Tensor<T>{}, Tensor<T>{}, Axis::Rows), add_scalar(slice_cols(m, W, W), T(1))),
                 slice_cols(m, 0, W));
    return output_(h);
  }

  Tensor<T> uncond_rows(std::size_t B) const {
    return gather_rows(reshape(uncond_, {1, cfg_.cond_dim}), std::vector<std::size_t>(B, 0));
  }

  void collect(ParamList<T>& out, const std::string& p = "head") const {
    cond_proj_.collect(out, p + ".cond_proj");
    time_in_.collect(out, p + ".time_in");
    time_out_.collect(out, p + ".time_out");
    input_.collect(out, p + ".input");
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      const auto q = p + ".block" + std::to_string(i);
      blocks_[i].mod.collect(out, q + ".mod");
      blocks_[i].l1.collect(out, q + ".l1");
      blocks_[i].l2.collect(out, q + ".l2");
    }
    final_mod_.collect(out, p + ".final_mod");
    output_.collect(out, p + ".output");
    out.emplace_back(p + ".uncond", uncond_);
  }

 private:
  struct Block {
    Linear<T> mod, l1, l2;
  };
  DiffusionHeadConfig cfg_;
  Linear<T> cond_proj_, time_in_, time_out_, input_;
  std::vector<Block> blocks_;
  Linear<T> final_mod_, output_;
  Tensor<T> uncond_;
};

struct DiffusionLossOptions {
  std::size_t draws = 4;   // (t, eps) pairs per target row
  double p_uncond = 0.1;   // conditioning dropout for classifier-free guidance
};

// Mean over rows and draws of ||eps - predictor(z_t, t, cond)||^2 (summed over
// latent dims). `predictor` is any callable (z_t, t, cond) -> eps_hat with the
// head's signature; `uncond_rows(n)` supplies the null conditioning.
template <typename T, typename Predictor, typename Uncond>
Tensor<T> diffusion_loss(const Predictor& predictor, const Uncond& uncond_rows, const Tensor<T>& cond,
                         const Tensor<T>& z0, const NoiseSchedule& sched, Rng& rng,
                         const DiffusionLossOptions& opt = {}) {
  const std::size_t B = z0.dim(0), D = z0.dim(1);
  if (cond.dim(0) != B) throw ShapeError("diffusion_loss: one conditioning row per target required");
  const std::size_t N = B * opt.draws;
  std::vector<std::size_t> rep(N);
  std::vector<double> ts(N);
  std::vector<T> zt(N * D), eps(N * D);
  std::vector<bool> drop(N);
  for (std::size_t n = 0; n < N; ++n) {
    const std::size_t r = n % B;
    rep[n] = r;
    const std::size_t t = 1 + rng.index(sched.T);
    ts[n] = static_cast<double>(t);
    const double a = sched.alpha(t), s = sched.sigma(t);
    for (std::size_t d = 0; d < D; ++d) {
      const double e = rng.normal();
      eps[n * D + d] = static_cast<T>(e);
      zt[n * D + d] = static_cast<T>(a * z0[r * D + d] + s * e);
    }
    drop[n] = rng.uniform() < opt.p_uncond;
  }
  // Dropped rows index the extra null row appended to the conditioning table.
  for (std::size_t n = 0; n < N; ++n)
    if (drop[n]) rep[n] = B;
  auto c = gather_rows(concat_rows<T>({cond, uncond_rows(1)}), rep);
  auto pred = predictor(Tensor<T>({N, D}, std::move(zt)), ts, c);
  auto diff = sub(pred, Tensor<T>({N, D}, std::move(eps)));
  return scale(sum(square(diff)), T(1) / static_cast<T>(N));
}

template <typename T>
Tensor<T> diffusion_loss(const DiffusionHead<T>& head, const Tensor<T>& cond, const Tensor<T>& z0,
                         const NoiseSchedule& sched, Rng& rng, const DiffusionLossOptions& opt = {}) {
  return diffusion_loss<T>(
      [&](const Tensor<T>& z, const std::vector<double>& t, const Tensor<T>& c) { return head(z, t, c); },
      [&](std::size_t n) { return head.uncond_rows(n); }, cond, z0, sched, rng, opt);
}

}  // namespace ntd
