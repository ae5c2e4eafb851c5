#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "ntd/numcore/ops.hpp"
#include "ntd/numcore/rng.hpp"

namespace ntd {

template <typename T>
using ParamList = std::vector<std::pair<std::string, Tensor<T>>>;

template <typename T>
Tensor<T> param_normal(Shape shape, Rng& rng, double stddev) {
  const auto n = shape_size(shape);
  return Tensor<T>(std::move(shape), rng.normal_vector<T>(n, stddev), true);
}

template <typename T>
Tensor<T> param_const(Shape shape, T v) {
  const auto n = shape_size(shape);
  return Tensor<T>(std::move(shape), std::vector<T>(n, v), true);
}

template <typename T>
std::vector<Tensor<T>> tensors_of(const ParamList<T>& params) {
  std::vector<Tensor<T>> out;
  out.reserve(params.size());
  for (const auto& [name, t] : params) out.push_back(t);
  return out;
}

template <typename T>
std::size_t count_parameters(const ParamList<T>& params) {
  std::size_t n = 0;
  for (const auto& [name, t] : params) n += t.size();
  return n;
}

// Token-major affine map: x [R x in] -> [R x out].
template <typename T>
struct Linear {
  Tensor<T> weight;  // [in x out]
  Tensor<T> bias;    // [out], undefined when disabled

  Linear() = default;
  Linear(std::size_t in, std::size_t out, Rng& rng, bool with_bias = true, double gain = 1.0)
      : weight(param_normal<T>({in, out}, rng, gain / std::sqrt(static_cast<double>(in)))) {
    if (with_bias) bias = param_const<T>({out}, T(0));
  }

  std::size_t in_features() const { return weight.dim(0); }
  std::size_t out_features() const { return weight.dim(1); }

  Tensor<T> operator()(const Tensor<T>& x) const {
    auto y = matmul(x.rank() == 1 ? reshape(x, {1, x.size()}) : x, weight);
    return bias.defined() ? add_bias(y, bias, Axis::Rows) : y;
  }

  void collect(ParamList<T>& out, const std::string& prefix) const {
    out.emplace_back(prefix + ".weight", weight);
    if (bias.defined()) out.emplace_back(prefix + ".bias", bias);
  }
};

// Channel-major pointwise (1x1) convolution: x [in x T] -> [out x T].
template <typename T>
struct Pointwise {
  Tensor<T> weight;  // [out x in]
  Tensor<T> bias;    // [out]

  Pointwise() = default;
  Pointwise(std::size_t in, std::size_t out, Rng& rng, double gain = 1.0)
      : weight(param_normal<T>({out, in}, rng, gain / std::sqrt(static_cast<double>(in)))),
        bias(param_const<T>({out}, T(0))) {}

  Tensor<T> operator()(const Tensor<T>& x) const { return add_bias(matmul(weight, x), bias, Axis::Cols); }

  void collect(ParamList<T>& out, const std::string& prefix) const {
    out.emplace_back(prefix + ".weight", weight);
    out.emplace_back(prefix + ".bias", bias);
  }
};

template <typename T>
struct LayerNorm {
  Tensor<T> gamma;
  Tensor<T> beta;
  Axis axis = Axis::Rows;

  LayerNorm() = default;
  LayerNorm(std::size_t width, Axis ax)
      : gamma(param_const<T>({width}, T(1))), beta(param_const<T>({width}, T(0))), axis(ax) {}

  Tensor<T> operator()(const Tensor<T>& x) const { return layer_norm(x, gamma, beta, axis); }

  void collect(ParamList<T>& out, const std::string& prefix) const {
    out.emplace_back(prefix + ".gamma", gamma);
    out.emplace_back(prefix + ".beta", beta);
  }
};

// Scaled dot-product attention for one head: q [Tq x d], k [Tk x d], v [Tk x dv].
// With `causal`, query i (aligned to the end of the keys) sees keys j <= i + (Tk - Tq).
template <typename T>
Tensor<T> attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, bool causal) {
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2) throw ShapeError("attention: expected 2-D q, k, v");
  if (q.dim(1) != k.dim(1)) throw ShapeError("attention: query and key head dimensions differ");
  if (k.dim(0) != v.dim(0)) throw ShapeError("attention: key and value lengths differ");
  if (causal && q.dim(0) > k.dim(0)) throw ShapeError("attention: more causal queries than keys");
  const T inv = T(1) / std::sqrt(static_cast<T>(q.dim(1)));
  auto scores = scale(matmul(q, k, false, true), inv);
  auto p = softmax_rows(scores, causal, k.dim(0) - q.dim(0));
  return matmul(p, v);
}

template <typename T>
Tensor<T> multi_head_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                               std::size_t heads, bool causal) {
  if (heads == 1) return attention(q, k, v, causal);
  if (q.dim(1) % heads != 0 || v.dim(1) % heads != 0) throw ShapeError("multi_head_attention: width not divisible by heads");
  const std::size_t dq = q.dim(1) / heads, dv = v.dim(1) / heads;
  std::vector<Tensor<T>> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    outs.push_back(attention(slice_cols(q, h * dq, dq), slice_cols(k, h * dq, dq), slice_cols(v, h * dv, dv), causal));
  }
  return concat_cols(outs);
}

// Strided causal convolution, kernel = stride = factor:
// x [Cin x T] -> [Cout x T/factor], weight [Cout x Cin*factor].
template <typename T>
Tensor<T> downsample_block(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, std::size_t factor) {
  if (factor < 1) throw ConfigError("downsample_block: factor must be >= 1");
  return add_bias(matmul(weight, fold_time(x, factor)), bias, Axis::Cols);
}

// Transposed strided convolution, kernel = stride = factor:
// x [Cin x J] -> [Cout x J*factor], weight [Cout*factor x Cin].
template <typename T>
Tensor<T> upsample_block(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, std::size_t factor) {
  if (factor < 1) throw ConfigError("upsample_block: factor must be >= 1");
  return add_bias(unfold_time(matmul(weight, x), factor), bias, Axis::Cols);
}

template <typename T>
struct Downsample {
  Tensor<T> weight, bias;
  std::size_t factor = 1;

  Downsample() = default;
  Downsample(std::size_t in, std::size_t out, std::size_t f, Rng& rng)
      : weight(param_normal<T>({out, in * f}, rng, 1.0 / std::sqrt(static_cast<double>(in * f)))),
        bias(param_const<T>({out}, T(0))),
        factor(f) {
    if (f < 1) throw ConfigError("Downsample: factor must be >= 1");
  }
  Tensor<T> operator()(const Tensor<T>& x) const { return downsample_block(x, weight, bias, factor); }
  void collect(ParamList<T>& out, const std::string& prefix) const {
    out.emplace_back(prefix + ".weight", weight);
    out.emplace_back(prefix + ".bias", bias);
  }
};

template <typename T>
struct Upsample {
  Tensor<T> weight, bias;
  std::size_t factor = 1;

  Upsample() = default;
  Upsample(std::size_t in, std::size_t out, std::size_t f, Rng& rng)
      : weight(param_normal<T>({out * f, in}, rng, 1.0 / std::sqrt(static_cast<double>(in)))),
        bias(param_const<T>({out}, T(0))),
        factor(f) {
    if (f < 1) throw ConfigError("Upsample: factor must be >= 1");
  }
  Tensor<T> operator()(const Tensor<T>& x) const { return upsample_block(x, weight, bias, factor); }
  void collect(ParamList<T>& out, const std::string& prefix) const {
    out.emplace_back(prefix + ".weight", weight);
    out.emplace_back(prefix + ".bias", bias);
  }
};

}  // namespace ntd
