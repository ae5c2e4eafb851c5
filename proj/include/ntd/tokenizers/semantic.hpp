#pragma once

#include <string>
#include <vector>

#include "ntd/numcore/transformer.hpp"
#include "ntd/sequencer/vocab.hpp"
#include "ntd/tokenizers/acoustic.hpp"

namespace ntd {

// Deterministic content encoder with the acoustic encoder's geometry and no
// sampling. Trained through AsrProxyDecoder, which is kept in a separate
// parameter group and never needed for synthesis.
template <typename T = float>
class SemanticTokenizer {
 public:
  SemanticTokenizer() = default;
  SemanticTokenizer(const TokenizerConfig& cfg, Rng& rng) : cfg_(cfg), encoder_(cfg, cfg.semantic_dim, rng) {}

  const TokenizerConfig& config() const { return cfg_; }
  const CausalEncoder<T>& encoder() const { return encoder_; }

  FrameSequence encode(const AudioBuffer& audio) const {
    if (audio.sample_rate != cfg_.sample_rate)
      throw ConfigError("semantic tokenizer expects " + std::to_string(cfg_.sample_rate) + " Hz audio, got " +
                        std::to_string(audio.sample_rate) + " Hz");
    if (audio.empty()) return {};
    NoGradGuard ng;
    return to_frames(encoder_(AcousticTokenizer<T>::audio_tensor(audio)));
  }

  // [semantic_dim x F], differentiable.
  Tensor<T> features(const Tensor<T>& audio) const { return encoder_(audio); }

  void collect(ParamList<T>& out) const { encoder_.collect(out, "semantic.encoder"); }
  ParamList<T> parameters() const {
    ParamList<T> p;
    collect(p);
    return p;
  }

 private:
  TokenizerConfig cfg_;
  CausalEncoder<T> encoder_;
};

struct AsrDecoderConfig {
  std::size_t dim = 64;
  std::size_t heads = 4;
  std::size_t layers = 2;
  std::size_t max_tokens = 64;
  std::size_t max_frames = 256;
  double position_std = 1.0;  // init scale of both learned position tables
};

// Transformer decoder predicting the transcript from semantic frames by
// cross-attention; used only as a training proxy.
template <typename T = float>
class AsrProxyDecoder {
 public:
  AsrProxyDecoder() = default;
  AsrProxyDecoder(std::size_t semantic_dim, const AsrDecoderConfig& cfg, Rng& rng)
      : cfg_(cfg),
        memory_in_(semantic_dim, cfg.dim, rng),
        memory_pos_(param_normal<T>({cfg.max_frames, cfg.dim}, rng, cfg.position_std)),
        token_emb_(param_normal<T>({vocab::kSize, cfg.dim}, rng, 0.5)),
        token_pos_(param_normal<T>({cfg.max_tokens, cfg.dim}, rng, cfg.position_std)),
        norm_out_(cfg.dim, Axis::Rows),
        out_(cfg.dim, vocab::kSize, rng) {
    for (std::size_t i = 0; i < cfg.layers; ++i) layers_.emplace_back(cfg.dim, cfg.heads, 4, true, rng);
  }

  // semantic [S x F] channel-major, tokens = [BOS, t1, ..., tn] -> logits [(n+1) x V].
  Tensor<T> logits(const Tensor<T>& semantic, const std::vector<std::size_t>& input_tokens) const {
    const std::size_t F = semantic.dim(1), L = input_tokens.size();
    if (F > cfg_.max_frames) throw CapacityError("asr decoder: too many frames");
    if (L > cfg_.max_tokens) throw CapacityError("asr decoder: transcript too long");
    std::vector<std::size_t> fpos(F), tpos(L);
    for (std::size_t i = 0; i < F; ++i) fpos[i] = i;
    for (std::size_t i = 0; i < L; ++i) tpos[i] = i;
    auto memory = add(memory_in_(transpose(semantic)), gather_rows(memory_pos_, fpos));
    auto x = add(gather_rows(token_emb_, input_tokens), gather_rows(token_pos_, tpos));
    for (const auto& layer : layers_) x = layer(x, true, memory);
    return out_(norm_out_(x));
  }

  void collect(ParamList<T>& out) const {
    memory_in_.collect(out, "asr.memory_in");
    out.emplace_back("asr.memory_pos", memory_pos_);
    out.emplace_back("asr.token_emb", token_emb_);
    out.emplace_back("asr.token_pos", token_pos_);
    for (std::size_t i = 0; i < layers_.size(); ++i) layers_[i].collect(out, "asr.layer" + std::to_string(i));
    norm_out_.collect(out, "asr.norm_out");
    out_.collect(out, "asr.out");
  }
  ParamList<T> parameters() const {
    ParamList<T> p;
    collect(p);
    return p;
  }

 private:
  AsrDecoderConfig cfg_;
  Linear<T> memory_in_;
  Tensor<T> memory_pos_;
  Tensor<T> token_emb_;
  Tensor<T> token_pos_;
  std::vector<TransformerLayer<T>> layers_;
  LayerNorm<T> norm_out_;
  Linear<T> out_;
};

// Teacher-forced transcript cross-entropy through the proxy decoder.
// Gradients reach both the decoder and whatever produced `semantic`.
template <typename T>
Tensor<T> asr_proxy_loss(const AsrProxyDecoder<T>& decoder, const Tensor<T>& semantic,
                         const std::vector<std::size_t>& transcript) {
  for (auto id : transcript)
    if (!vocab::is_phone(id)) throw DataError("asr_proxy_loss: token id " + std::to_string(id) + " is not a phone");
  std::vector<std::size_t> input{vocab::kBos}, target;
  input.insert(input.end(), transcript.begin(), transcript.end());
  target.insert(target.end(), transcript.begin(), transcript.end());
  target.push_back(vocab::kEos);
  return cross_entropy(decoder.logits(semantic, input), target);
}

}  // namespace ntd
