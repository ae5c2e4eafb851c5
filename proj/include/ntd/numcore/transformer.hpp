#pragma once

#include <cstddef>
#include <string>

#include "ntd/numcore/layers.hpp"

namespace ntd {

// Pre-norm transformer layer over token-major [T x D] input, with optional
// cross-attention to a memory sequence [M x D].
template <typename T>
struct TransformerLayer {
  std::size_t heads = 1;
  bool cross = false;
  LayerNorm<T> norm_self, norm_cross, norm_ffn;
  Linear<T> q, k, v, o;
  Linear<T> cq, ck, cv, co;
  Linear<T> ffn_in, ffn_out;

  // Keys/values of every position seen so far (incremental decoding).
  struct Cache {
    Tensor<T> keys, values;
  };

  TransformerLayer() = default;
  TransformerLayer(std::size_t dim, std::size_t n_heads, std::size_t ffn_mult, bool with_cross, Rng& rng)
      : heads(n_heads),
        cross(with_cross),
        norm_self(dim, Axis::Rows),
        norm_ffn(dim, Axis::Rows),
        q(dim, dim, rng),
        k(dim, dim, rng),
        v(dim, dim, rng),
        o(dim, dim, rng, true, 0.5),
        ffn_in(dim, dim * ffn_mult, rng),
        ffn_out(dim * ffn_mult, dim, rng, true, 0.5) {
    if (dim % n_heads != 0) throw ConfigError("transformer: width not divisible by head count");
    if (with_cross) {
      norm_cross = LayerNorm<T>(dim, Axis::Rows);
      cq = Linear<T>(dim, dim, rng);
      ck = Linear<T>(dim, dim, rng);
      cv = Linear<T>(dim, dim, rng);
      co = Linear<T>(dim, dim, rng, true, 0.5);
    }
  }

  Tensor<T> operator()(const Tensor<T>& x, bool causal, const Tensor<T>& memory = {}) const {
    auto h = norm_self(x);
    auto y = add(x, o(multi_head_attention(q(h), k(h), v(h), heads, causal)));
    if (cross) {
      if (!memory.defined()) throw ContractError("transformer: cross-attention layer needs a memory sequence");
      auto hc = norm_cross(y);
      y = add(y, co(multi_head_attention(cq(hc), ck(memory), cv(memory), heads, false)));
    }
    return add(y, ffn_out(gelu(ffn_in(norm_ffn(y)))));
  }

  // Causal self-attention for new rows appended after the cached positions.
  Tensor<T> step(const Tensor<T>& x, Cache& cache) const {
    auto h = norm_self(x);
    auto kn = k(h), vn = v(h);
    cache.keys = cache.keys.defined() ? concat_rows<T>({cache.keys, kn}) : kn;
    cache.values = cache.values.defined() ? concat_rows<T>({cache.values, vn}) : vn;
    auto y = add(x, o(multi_head_attention(q(h), cache.keys, cache.values, heads, true)));
    return add(y, ffn_out(gelu(ffn_in(norm_ffn(y)))));
  }

  void collect(ParamList<T>& out, const std::string& p) const {
    norm_self.collect(out, p + ".norm_self");
    q.collect(out, p + ".q");
    k.collect(out, p + ".k");
    v.collect(out, p + ".v");
    o.collect(out, p + ".o");
    if (cross) {
      norm_cross.collect(out, p + ".norm_cross");
      cq.collect(out, p + ".cq");
      ck.collect(out, p + ".ck");
      cv.collect(out, p + ".cv");
      co.collect(out, p + ".co");
    }
    norm_ffn.collect(out, p + ".norm_ffn");
    ffn_in.collect(out, p + ".ffn_in");
    ffn_out.collect(out, p + ".ffn_out");
  }
};

}  // namespace ntd
