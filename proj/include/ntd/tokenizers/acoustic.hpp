#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "ntd/io/audio.hpp"
#include "ntd/tokenizers/blocks.hpp"

namespace ntd {

using FrameSequence = std::vector<std::vector<float>>;

// Per-frame noise of the sigma-VAE: epsilon ~ N(0, 1) and sigma ~ N(0, C_sigma),
// both elementwise and regenerated exactly from `seed`.
struct NoiseDraw {
  std::vector<float> epsilon;
  std::vector<float> sigma;
  std::uint64_t seed = 0;

  static NoiseDraw generate(std::size_t dim, double sigma_scale, std::uint64_t seed) {
    Rng rng(seed);
    NoiseDraw d;
    d.seed = seed;
    d.epsilon = rng.normal_vector<float>(dim);
    d.sigma = rng.normal_vector<float>(dim, std::sqrt(sigma_scale));
    return d;
  }
};

// z = mu + sigma * epsilon, elementwise.
inline std::vector<float> sample_latent(const std::vector<float>& mu, const NoiseDraw& draw) {
  if (draw.epsilon.size() != mu.size() || draw.sigma.size() != mu.size())
    throw ShapeError("sample_latent: mu has " + std::to_string(mu.size()) + " entries, draw has " +
                     std::to_string(draw.epsilon.size()));
  std::vector<float> z(mu.size());
  for (std::size_t i = 0; i < mu.size(); ++i) z[i] = mu[i] + draw.sigma[i] * draw.epsilon[i];
  return z;
}

// Channel-major [D x F] tensor <-> frame-major list of D-vectors.
template <typename T>
FrameSequence to_frames(const Tensor<T>& cols) {
  const std::size_t D = cols.dim(0), F = cols.dim(1);
  FrameSequence out(F, std::vector<float>(D));
  for (std::size_t d = 0; d < D; ++d)
    for (std::size_t f = 0; f < F; ++f) out[f][d] = static_cast<float>(cols[d * F + f]);
  return out;
}

template <typename T>
Tensor<T> from_frames(const FrameSequence& frames, std::size_t dim) {
  const std::size_t F = frames.size();
  std::vector<T> v(dim * F);
  for (std::size_t f = 0; f < F; ++f) {
    if (frames[f].size() != dim)
      throw ShapeError("frame " + std::to_string(f) + " has " + std::to_string(frames[f].size()) +
                       " entries, expected " + std::to_string(dim));
    for (std::size_t d = 0; d < dim; ++d) v[d * F + f] = static_cast<T>(frames[f][d]);
  }
  return Tensor<T>({dim, F}, std::move(v));
}

// sigma-VAE acoustic tokenizer: causal encoder to per-frame means, fixed-prior
// noise on the latent, mirror-symmetric causal decoder back to audio.
template <typename T = float>
class AcousticTokenizer {
 public:
  AcousticTokenizer() = default;
  AcousticTokenizer(const TokenizerConfig& cfg, Rng& rng)
      : cfg_(cfg), encoder_(cfg, cfg.latent_dim, rng), decoder_(cfg, cfg.latent_dim, rng) {}

  const TokenizerConfig& config() const { return cfg_; }
  const CausalEncoder<T>& encoder() const { return encoder_; }
  const CausalDecoder<T>& decoder() const { return decoder_; }

  void check_rate(const AudioBuffer& audio) const {
    if (audio.sample_rate != cfg_.sample_rate)
      throw ConfigError("acoustic tokenizer expects " + std::to_string(cfg_.sample_rate) + " Hz audio, got " +
                        std::to_string(audio.sample_rate) + " Hz");
  }

  // mu for every frame; ceil(samples / hop) frames.
  FrameSequence encode(const AudioBuffer& audio) const {
    check_rate(audio);
    if (audio.empty()) return {};
    NoGradGuard ng;
    return to_frames(encoder_(audio_tensor(audio)));
  }

  AudioBuffer decode(const FrameSequence& z) const {
    AudioBuffer out;
    out.sample_rate = cfg_.sample_rate;
    if (z.empty()) return out;
    NoGradGuard ng;
    const auto y = decoder_(from_frames<T>(z, cfg_.latent_dim));
    out.samples.assign(y.values().begin(), y.values().end());
    return out;
  }

  // Noise draws for a sequence of frames; frame i uses seed base_seed + i.
  std::vector<NoiseDraw> draws(std::size_t frames, std::uint64_t base_seed) const {
    std::vector<NoiseDraw> out;
    out.reserve(frames);
    for (std::size_t i = 0; i < frames; ++i) out.push_back(NoiseDraw::generate(cfg_.latent_dim, cfg_.sigma_scale, base_seed + i));
    return out;
  }

  FrameSequence sample(const FrameSequence& mu, std::uint64_t base_seed) const {
    const auto d = draws(mu.size(), base_seed);
    FrameSequence z;
    z.reserve(mu.size());
    for (std::size_t i = 0; i < mu.size(); ++i) z.push_back(sample_latent(mu[i], d[i]));
    return z;
  }

  // Differentiable reconstruction for training: returns (mu [D x F], audio [1 x F*hop]).
  std::pair<Tensor<T>, Tensor<T>> reconstruct(const Tensor<T>& audio, Rng& rng) const {
    auto mu = encoder_(audio);
    const std::size_t n = mu.size();
    std::vector<T> noise(n);
    const double sd = std::sqrt(cfg_.sigma_scale);
    for (std::size_t i = 0; i < n; ++i) {
      const double sigma = rng.normal() * sd;
      noise[i] = static_cast<T>(sigma * rng.normal());
    }
    auto z = add(mu, Tensor<T>(mu.shape(), std::move(noise)));
    return {mu, decoder_(z)};
  }

  void collect(ParamList<T>& out) const {
    encoder_.collect(out, "acoustic.encoder");
    decoder_.collect(out, "acoustic.decoder");
  }

  ParamList<T> parameters() const {
    ParamList<T> p;
    collect(p);
    return p;
  }

  static Tensor<T> audio_tensor(const AudioBuffer& audio) {
    return Tensor<T>({1, audio.size()}, std::vector<T>(audio.samples.begin(), audio.samples.end()));
  }

 private:
  TokenizerConfig cfg_;
  CausalEncoder<T> encoder_;
  CausalDecoder<T> decoder_;
};

// Incremental audio -> mu frames with carried convolution state.
template <typename T = float>
class StreamingEncoder {
 public:
  explicit StreamingEncoder(const CausalEncoder<T>& enc) : enc_(&enc), state_(enc.initial_state()) {}

  FrameSequence push(std::span<const float> samples) {
    NoGradGuard ng;
    std::vector<T> chunk(samples.begin(), samples.end());
    return to_frames(enc_->step(std::span<const T>(chunk), state_));
  }

  FrameSequence flush() {
    NoGradGuard ng;
    return to_frames(enc_->flush(state_));
  }

 private:
  const CausalEncoder<T>* enc_;
  typename CausalEncoder<T>::State state_;
};

// Incremental latent frames -> audio, hop samples per frame.
template <typename T = float>
class StreamingDecoder {
 public:
  explicit StreamingDecoder(const CausalDecoder<T>& dec) : dec_(&dec), state_(dec.initial_state()) {}

  std::vector<float> push(const FrameSequence& frames) {
    if (frames.empty()) return {};
    NoGradGuard ng;
    const auto y = dec_->step(from_frames<T>(frames, dec_->in_dim()), state_);
    return {y.values().begin(), y.values().end()};
  }

 private:
  const CausalDecoder<T>* dec_;
  typename CausalDecoder<T>::State state_;
};

}  // namespace ntd
