#pragma once

#include <string>
#include <vector>

#include "ntd/numcore/transformer.hpp"
#include "ntd/sequencer/context.hpp"

namespace ntd {

struct SequencerConfig {
  std::size_t latent_dim = 16;
  std::size_t semantic_dim = 16;
  std::size_t model_dim = 128;
  std::size_t heads = 4;
  std::size_t layers = 4;
  std::size_t ffn_mult = 4;
  std::size_t max_positions = 512;

  void validate() const {
    if (model_dim == 0 || heads == 0 || layers == 0 || max_positions == 0)
      throw ConfigError("sequencer: dimensions must be positive");
    if (model_dim % heads != 0) throw ConfigError("sequencer: model_dim must be divisible by heads");
  }
};

// Causal transformer over the interleaved context. Tags and phones use a token
// table, prompt frames an acoustic-only projection, speech frames the hybrid
// concat-then-project of (acoustic, semantic). Learned absolute positions.
template <typename T = float>
class SequenceModel {
 public:
  struct State {
    std::vector<typename TransformerLayer<T>::Cache> caches;
    std::size_t length = 0;
  };

  SequenceModel() = default;
  SequenceModel(const SequencerConfig& cfg, Rng& rng)
      : cfg_(cfg),
        token_emb_(param_normal<T>({vocab::kSize, cfg.model_dim}, rng, 1.0)),
        pos_emb_(param_normal<T>({cfg.max_positions, cfg.model_dim}, rng, 1.0)),
        prompt_proj_(cfg.latent_dim, cfg.model_dim, rng),
        hybrid_(cfg.latent_dim + cfg.semantic_dim, cfg.model_dim, rng),
        norm_out_(cfg.model_dim, Axis::Rows),
        stop_(cfg.model_dim, 1, rng) {
    cfg.validate();
    for (std::size_t i = 0; i < cfg.layers; ++i) layers_.emplace_back(cfg.model_dim, cfg.heads, cfg.ffn_mult, false, rng);
  }

  const SequencerConfig& config() const { return cfg_; }

  // [R x latent] and [R x semantic] -> [R x model_dim].
  Tensor<T> embed_hybrid(const Tensor<T>& z, const Tensor<T>& semantic) const {
    if (z.rank() != 2 || semantic.rank() != 2 || z.dim(0) != semantic.dim(0) || z.dim(1) != cfg_.latent_dim ||
        semantic.dim(1) != cfg_.semantic_dim)
      throw ShapeError("embed_hybrid: expected [R x " + std::to_string(cfg_.latent_dim) + "] and [R x " +
                       std::to_string(cfg_.semantic_dim) + "]");
    return hybrid_(concat_cols<T>({z, semantic}));
  }

  std::vector<float> embed_hybrid(const std::vector<float>& z, const std::vector<float>& semantic) const {
    NoGradGuard ng;
    const auto y = embed_hybrid(row(z, cfg_.latent_dim, "acoustic"), row(semantic, cfg_.semantic_dim, "semantic"));
    return {y.values().begin(), y.values().end()};
  }

  // Input rows for positions [begin, end) of the context, including positions.
  Tensor<T> embed(const ContextSequence& ctx, std::size_t begin, std::size_t end) const {
    if (begin > end || end > ctx.size()) throw ContractError("sequencer: embed range outside the context");
    if (end > cfg_.max_positions)
      throw CapacityError("sequencer: context of " + std::to_string(end) + " positions exceeds the limit of " +
                          std::to_string(cfg_.max_positions));
    const std::size_t n = end - begin, L = cfg_.latent_dim, S = cfg_.semantic_dim;
    std::vector<T> prompt_in, speech_in;
    std::vector<std::size_t> kind(n), local(n);
    std::size_t np = 0, ns = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& p = ctx[begin + i];
      switch (p.role) {
        case Role::SpeakerTag:
        case Role::Text:
          if (p.token >= vocab::kSize) throw DataError("sequencer: token id " + std::to_string(p.token) + " out of range");
          kind[i] = 0;
          local[i] = p.token;
          break;
        case Role::Prompt:
          check_len(p.latent, L, begin + i, "latent");
          prompt_in.insert(prompt_in.end(), p.latent.begin(), p.latent.end());
          kind[i] = 1;
          local[i] = np++;
          break;
        case Role::Speech:
          check_len(p.latent, L, begin + i, "latent");
          check_len(p.semantic, S, begin + i, "semantic");
          speech_in.insert(speech_in.end(), p.latent.begin(), p.latent.end());
          speech_in.insert(speech_in.end(), p.semantic.begin(), p.semantic.end());
          kind[i] = 2;
          local[i] = ns++;
          break;
      }
    }
    std::vector<Tensor<T>> parts{token_emb_};
    std::size_t prompt_off = vocab::kSize, speech_off = vocab::kSize;
    if (np) {
      parts.push_back(prompt_proj_(Tensor<T>({np, L}, std::move(prompt_in))));
      speech_off += np;
    }
    if (ns) parts.push_back(hybrid_(Tensor<T>({ns, L + S}, std::move(speech_in))));
    std::vector<std::size_t> ids(n), pos(n);
    for (std::size_t i = 0; i < n; ++i) {
      ids[i] = kind[i] == 0 ? local[i] : (kind[i] == 1 ? prompt_off : speech_off) + local[i];
      pos[i] = begin + i;
    }
    const auto table = parts.size() == 1 ? parts[0] : concat_rows(parts);
    return add(gather_rows(table, ids), gather_rows(pos_emb_, pos));
  }

  // Hidden states h_i for every position; h_i sees positions <= i only.
  Tensor<T> forward(const ContextSequence& ctx) const {
    if (ctx.size() == 0) throw ContractError("sequencer: empty context");
    auto x = embed(ctx, 0, ctx.size());
    for (const auto& layer : layers_) x = layer(x, true);
    return norm_out_(x);
  }

  // Incremental forward: hidden states of positions [state.length, ctx.size()).
  Tensor<T> extend(const ContextSequence& ctx, State& state) const {
    if (state.caches.empty()) state.caches.resize(layers_.size());
    if (ctx.size() <= state.length) throw ContractError("sequencer: no new positions to process");
    auto x = embed(ctx, state.length, ctx.size());
    for (std::size_t l = 0; l < layers_.size(); ++l) x = layers_[l].step(x, state.caches[l]);
    state.length = ctx.size();
    return norm_out_(x);
  }

  // Stop logits [R x 1] for hidden rows [R x model_dim].
  Tensor<T> stop_logits(const Tensor<T>& hidden) const { return stop_(hidden); }

  void collect(ParamList<T>& out) const {
    out.emplace_back("seq.token_emb", token_emb_);
    out.emplace_back("seq.pos_emb", pos_emb_);
    prompt_proj_.collect(out, "seq.prompt_proj");
    hybrid_.collect(out, "seq.hybrid");
    for (std::size_t i = 0; i < layers_.size(); ++i) layers_[i].collect(out, "seq.layer" + std::to_string(i));
    norm_out_.collect(out, "seq.norm_out");
    stop_.collect(out, "seq.stop");
  }
  ParamList<T> parameters() const {
    ParamList<T> p;
    collect(p);
    return p;
  }

 private:
  static void check_len(const std::vector<float>& v, std::size_t n, std::size_t pos, const char* what) {
    if (v.size() != n)
      throw ShapeError("sequencer: position " + std::to_string(pos) + " has a " + std::to_string(v.size()) + "-entry " +
                       what + " vector, expected " + std::to_string(n));
  }
  static Tensor<T> row(const std::vector<float>& v, std::size_t n, const char* what) {
    if (v.size() != n)
      throw ShapeError(std::string("embed_hybrid: ") + what + " vector has " + std::to_string(v.size()) +
                       " entries, expected " + std::to_string(n));
    return Tensor<T>({1, n}, std::vector<T>(v.begin(), v.end()));
  }

  SequencerConfig cfg_;
  Tensor<T> token_emb_;
  Tensor<T> pos_emb_;
  Linear<T> prompt_proj_;
  Linear<T> hybrid_;
  std::vector<TransformerLayer<T>> layers_;
  LayerNorm<T> norm_out_;
  Linear<T> stop_;
};

}  // namespace ntd
