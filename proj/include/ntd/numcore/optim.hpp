#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "ntd/numcore/layers.hpp"

namespace ntd {

// Cosine decay from `peak` to `floor` over `total` steps after a linear warmup.
inline double cosine_lr(std::size_t step, std::size_t total, double peak, std::size_t warmup = 0,
                        double floor = 0.0) {
  if (warmup > 0 && step < warmup) return peak * static_cast<double>(step + 1) / static_cast<double>(warmup);
  if (total <= warmup) return peak;
  const double p = std::min(1.0, static_cast<double>(step - warmup) / static_cast<double>(total - warmup));
  return floor + 0.5 * (peak - floor) * (1.0 + std::cos(M_PI * p));
}

// Adam with decoupled weight decay. Decay applies to matrices only.
template <typename T>
class AdamW {
 public:
  AdamW(std::vector<Tensor<T>> params, double weight_decay = 0.01, double beta1 = 0.9, double beta2 = 0.999,
        double eps = 1e-8)
      : params_(std::move(params)), wd_(weight_decay), b1_(beta1), b2_(beta2), eps_(eps) {
    for (const auto& p : params_) {
      m_.emplace_back(p.size(), 0.0);
      v_.emplace_back(p.size(), 0.0);
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  // Global L2 norm of all accumulated gradients.
  double grad_norm() const {
    double s = 0;
    for (const auto& p : params_)
      if (p.has_grad())
        for (T g : p.node()->grad) s += static_cast<double>(g) * g;
    return std::sqrt(s);
  }

  // Applies one update with gradients scaled by `grad_scale`, clipped to
  // `clip` global norm when clip > 0.
  void step(double lr, double grad_scale = 1.0, double clip = 0.0) {
    ++t_;
    double k = grad_scale;
    if (clip > 0) {
      const double n = grad_norm() * grad_scale;
      if (n > clip) k *= clip / n;
    }
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& p = params_[i];
      if (!p.has_grad()) continue;
      auto w = p.mutable_data();
      const auto& g = p.node()->grad;
      auto& m = m_[i];
      auto& v = v_[i];
      const bool decay = p.rank() >= 2 && wd_ > 0;
      for (std::size_t j = 0; j < w.size(); ++j) {
        const double gj = static_cast<double>(g[j]) * k;
        m[j] = b1_ * m[j] + (1 - b1_) * gj;
        v[j] = b2_ * v[j] + (1 - b2_) * gj * gj;
        double upd = (m[j] / c1) / (std::sqrt(v[j] / c2) + eps_);
        if (decay) upd += wd_ * static_cast<double>(w[j]);
        w[j] = static_cast<T>(static_cast<double>(w[j]) - lr * upd);
      }
    }
  }

  std::size_t steps_taken() const { return t_; }

 private:
  std::vector<Tensor<T>> params_;
  std::vector<std::vector<double>> m_, v_;
  double wd_, b1_, b2_, eps_;
  std::size_t t_ = 0;
};

}  // namespace ntd
