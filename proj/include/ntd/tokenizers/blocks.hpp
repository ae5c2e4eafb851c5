#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "ntd/numcore/layers.hpp"
#include "ntd/tokenizers/config.hpp"

namespace ntd {

// Transformer-style block with the attention sublayer replaced by a depthwise
// causal convolution. Channel-major [C x T]:
//   x = x + dwconv(norm1(x));  x = x + ffn(norm2(x))
template <typename T>
struct ConvBlock {
  LayerNorm<T> norm1, norm2;
  Tensor<T> dw_kernel;  // [C x W]
  Tensor<T> dw_bias;    // [C]
  Pointwise<T> ffn_in, ffn_out;

  // Carried left context for streaming: last W-1 columns of norm1(x).
  struct State {
    Tensor<T> history;
  };

  ConvBlock() = default;
  ConvBlock(std::size_t channels, std::size_t width, std::size_t ffn_mult, Rng& rng)
      : norm1(channels, Axis::Cols),
        norm2(channels, Axis::Cols),
        dw_kernel(param_normal<T>({channels, width}, rng, 1.0 / std::sqrt(static_cast<double>(width)))),
        dw_bias(param_const<T>({channels}, T(0))),
        ffn_in(channels, channels * ffn_mult, rng),
        ffn_out(channels * ffn_mult, channels, rng, 0.5) {}

  std::size_t channels() const { return dw_kernel.dim(0); }
  std::size_t width() const { return dw_kernel.dim(1); }

  State initial_state() const { return {Tensor<T>::zeros({channels(), width() - 1})}; }

  Tensor<T> operator()(const Tensor<T>& x) const {
    auto h = add_bias(conv1d_depthwise_causal(norm1(x), dw_kernel), dw_bias, Axis::Cols);
    auto y = add(x, h);
    return add(y, ffn_out(gelu(ffn_in(norm2(y)))));
  }

  // Same computation on a chunk, continuing from `st`.
  Tensor<T> step(const Tensor<T>& x, State& st) const {
    const std::size_t n = x.dim(1), ctx = width() - 1;
    auto normed = norm1(x);
    auto full = ctx ? concat_cols<T>({st.history, normed}) : normed;
    auto conv = conv1d_depthwise_causal(full, dw_kernel);
    auto h = add_bias(ctx ? slice_cols(conv, ctx, n) : conv, dw_bias, Axis::Cols);
    if (ctx) st.history = slice_cols(full, full.dim(1) - ctx, ctx).detach();
    auto y = add(x, h);
    return add(y, ffn_out(gelu(ffn_in(norm2(y)))));
  }

  void collect(ParamList<T>& out, const std::string& p) const {
    norm1.collect(out, p + ".norm1");
    out.emplace_back(p + ".dw.kernel", dw_kernel);
    out.emplace_back(p + ".dw.bias", dw_bias);
    norm2.collect(out, p + ".norm2");
    ffn_in.collect(out, p + ".ffn_in");
    ffn_out.collect(out, p + ".ffn_out");
  }
};

// Hierarchical causal encoder: stem, then stage blocks with one strided
// downsampling layer at each stage boundary, then a pointwise head.
// Audio [1 x N] -> features [out_dim x ceil(N / hop)].
template <typename T>
class CausalEncoder {
 public:
  struct State {
    std::vector<std::vector<typename ConvBlock<T>::State>> blocks;  // [stage][block]
    std::vector<Tensor<T>> pending;  // per downsampling layer: columns awaiting a full group
    std::size_t consumed = 0;        // samples fed so far
  };

  CausalEncoder() = default;
  CausalEncoder(const TokenizerConfig& cfg, std::size_t out_dim, Rng& rng) : cfg_(cfg) {
    cfg.validate();
    const auto& ch = cfg.stage_channels;
    stem_ = Pointwise<T>(1, ch[0], rng);
    stages_.resize(ch.size());
    for (std::size_t s = 0; s < ch.size(); ++s) {
      for (std::size_t b = 0; b < cfg.blocks_per_stage; ++b)
        stages_[s].emplace_back(ch[s], cfg.conv_width, cfg.ffn_mult, rng);
      if (s + 1 < ch.size()) downs_.emplace_back(ch[s], ch[s + 1], cfg.downsample_factors[s], rng);
    }
    head_ = Pointwise<T>(ch.back(), out_dim, rng);
  }

  const TokenizerConfig& config() const { return cfg_; }
  std::size_t out_dim() const { return head_.weight.dim(0); }

  // Offline pass. Input is right-padded with zeros to a multiple of hop.
  Tensor<T> operator()(const Tensor<T>& audio) const {
    const std::size_t n = audio.size();
    if (n == 0) return Tensor<T>::zeros({out_dim(), 0});
    const std::size_t hop = cfg_.hop();
    const std::size_t padded = (n + hop - 1) / hop * hop;
    auto x = pad_time_right(reshape(audio, {1, n}), padded - n);
    x = stem_(x);
    for (std::size_t s = 0; s < stages_.size(); ++s) {
      for (const auto& blk : stages_[s]) x = blk(x);
      if (s < downs_.size()) x = downs_[s](x);
    }
    return head_(x);
  }

  State initial_state() const {
    State st;
    for (const auto& stage : stages_) {
      st.blocks.emplace_back();
      for (const auto& blk : stage) st.blocks.back().push_back(blk.initial_state());
    }
    for (std::size_t s = 0; s < downs_.size(); ++s)
      st.pending.push_back(Tensor<T>::zeros({cfg_.stage_channels[s], 0}));
    return st;
  }

  // Feeds a chunk of samples; returns the frames completed by it ([out_dim x k], k may be 0).
  Tensor<T> step(std::span<const T> chunk, State& st) const {
    st.consumed += chunk.size();
    if (chunk.empty()) return Tensor<T>::zeros({out_dim(), 0});
    auto x = stem_(Tensor<T>({1, chunk.size()}, std::vector<T>(chunk.begin(), chunk.end())));
    for (std::size_t s = 0; s < stages_.size(); ++s) {
      for (std::size_t b = 0; b < stages_[s].size(); ++b) x = stages_[s][b].step(x, st.blocks[s][b]);
      if (s < downs_.size()) {
        const std::size_t f = downs_[s].factor;
        auto joined = st.pending[s].dim(1) ? concat_cols<T>({st.pending[s], x}) : x;
        const std::size_t usable = joined.dim(1) / f * f;
        st.pending[s] = slice_cols(joined, usable, joined.dim(1) - usable).detach();
        if (usable == 0) return Tensor<T>::zeros({out_dim(), 0});
        x = downs_[s](slice_cols(joined, 0, usable));
      }
    }
    return head_(x);
  }

  // Zero-pads the stream to a whole number of frames, matching the offline pass.
  Tensor<T> flush(State& st) const {
    const std::size_t hop = cfg_.hop();
    const std::size_t rem = st.consumed % hop;
    if (rem == 0) return Tensor<T>::zeros({out_dim(), 0});
    std::vector<T> zeros(hop - rem, T(0));
    return step(std::span<const T>(zeros), st);
  }

  void collect(ParamList<T>& out, const std::string& p) const {
    stem_.collect(out, p + ".stem");
    for (std::size_t s = 0; s < stages_.size(); ++s) {
      for (std::size_t b = 0; b < stages_[s].size(); ++b)
        stages_[s][b].collect(out, p + ".stage" + std::to_string(s) + ".block" + std::to_string(b));
      if (s < downs_.size()) downs_[s].collect(out, p + ".down" + std::to_string(s));
    }
    head_.collect(out, p + ".head");
  }

 private:
  TokenizerConfig cfg_;
  Pointwise<T> stem_;
  std::vector<std::vector<ConvBlock<T>>> stages_;
  std::vector<Downsample<T>> downs_;
  Pointwise<T> head_;
};

// Mirror of CausalEncoder: pointwise input, stages in reverse order with a
// transposed strided convolution at each boundary, pointwise output.
// Latents [in_dim x F] -> audio [1 x F * hop]. Frame j only produces samples
// [j*hop, (j+1)*hop) and depends on frames <= j.
template <typename T>
class CausalDecoder {
 public:
  struct State {
    std::vector<std::vector<typename ConvBlock<T>::State>> blocks;
  };

  CausalDecoder() = default;
  CausalDecoder(const TokenizerConfig& cfg, std::size_t in_dim, Rng& rng) : cfg_(cfg) {
    cfg.validate();
    const auto& ch = cfg.stage_channels;
    input_ = Pointwise<T>(in_dim, ch.back(), rng);
    stages_.resize(ch.size());
    for (std::size_t s = 0; s < ch.size(); ++s)
      for (std::size_t b = 0; b < cfg.blocks_per_stage; ++b)
        stages_[s].emplace_back(ch[s], cfg.conv_width, cfg.ffn_mult, rng);
    for (std::size_t s = 0; s + 1 < ch.size(); ++s) ups_.emplace_back(ch[s + 1], ch[s], cfg.downsample_factors[s], rng);
    output_ = Pointwise<T>(ch[0], 1, rng);
  }

  std::size_t in_dim() const { return input_.weight.dim(1); }

  Tensor<T> operator()(const Tensor<T>& latents) const {
    if (latents.dim(1) == 0) return Tensor<T>::zeros({1, 0});
    auto x = input_(latents);
    for (std::size_t s = stages_.size(); s-- > 0;) {
      for (const auto& blk : stages_[s]) x = blk(x);
      if (s > 0) x = ups_[s - 1](x);
    }
    return output_(x);
  }

  State initial_state() const {
    State st;
    for (const auto& stage : stages_) {
      st.blocks.emplace_back();
      for (const auto& blk : stage) st.blocks.back().push_back(blk.initial_state());
    }
    return st;
  }

  Tensor<T> step(const Tensor<T>& latents, State& st) const {
    if (latents.dim(1) == 0) return Tensor<T>::zeros({1, 0});
    auto x = input_(latents);
    for (std::size_t s = stages_.size(); s-- > 0;) {
      for (std::size_t b = 0; b < stages_[s].size(); ++b) x = stages_[s][b].step(x, st.blocks[s][b]);
      if (s > 0) x = ups_[s - 1](x);
    }
    return output_(x);
  }

  void collect(ParamList<T>& out, const std::string& p) const {
    input_.collect(out, p + ".input");
    for (std::size_t s = stages_.size(); s-- > 0;) {
      for (std::size_t b = 0; b < stages_[s].size(); ++b)
        stages_[s][b].collect(out, p + ".stage" + std::to_string(s) + ".block" + std::to_string(b));
      if (s > 0) ups_[s - 1].collect(out, p + ".up" + std::to_string(s - 1));
    }
    output_.collect(out, p + ".output");
  }

 private:
  TokenizerConfig cfg_;
  Pointwise<T> input_;
  std::vector<std::vector<ConvBlock<T>>> stages_;
  std::vector<Upsample<T>> ups_;
  Pointwise<T> output_;
};

}  // namespace ntd
