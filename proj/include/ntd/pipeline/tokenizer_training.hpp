#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "ntd/io/corpus.hpp"
#include "ntd/io/metrics.hpp"
#include "ntd/numcore/optim.hpp"
#include "ntd/pipeline/log.hpp"
#include "ntd/pipeline/losses.hpp"
#include "ntd/tokenizers/semantic.hpp"

namespace ntd {

struct AcousticTrainConfig {
  std::size_t steps = 1000;
  std::size_t batch = 8;
  std::size_t crop_samples = 4800;  // rounded down to whole frames
  std::size_t warmup = 20;
  double lr = 2e-3;
  double l1_weight = 20;
  double stft_weight = 0.01;
  std::vector<std::size_t> stft_windows{64, 128, 256};
  std::uint64_t seed = 1;
};

struct SemanticTrainConfig {
  std::size_t steps = 800;
  std::size_t batch = 8;
  std::size_t warmup = 20;
  double lr = 1e-3;
  AsrDecoderConfig decoder;
  std::uint64_t seed = 2;
};

struct TrainCurve {
  std::vector<double> losses;  // one per step
};

namespace detail {

inline void check_finite(double loss, const char* phase, std::size_t step) {
  if (!std::isfinite(loss))
    throw TrainingError(std::string(phase) + " training diverged at step " + std::to_string(step) +
                        ": loss is " + std::to_string(loss));
}

inline void check_train_set(const std::vector<Utterance>& data, const char* phase) {
  if (data.empty()) throw DataError(std::string(phase) + " training: empty training set");
}

// Random frame-aligned window of at most `crop` samples.
template <typename T>
Tensor<T> random_crop(const AudioBuffer& a, std::size_t crop, std::size_t hop, Rng& rng) {
  const std::size_t len = std::max<std::size_t>(hop, std::min(crop, a.size()) / hop * hop);
  std::vector<T> x(len, T(0));
  const std::size_t slots = a.size() >= len ? (a.size() - len) / hop + 1 : 1;
  const std::size_t off = rng.index(slots) * hop;
  for (std::size_t i = 0; i < len && off + i < a.size(); ++i) x[i] = static_cast<T>(a.samples[off + i]);
  return Tensor<T>({1, len}, std::move(x));
}

}  // namespace detail

// Reconstruction objective: weighted time-domain L1 plus multi-resolution
// STFT magnitude error, through the sigma-VAE noise.
template <typename T>
Tensor<T> acoustic_loss(const AcousticTokenizer<T>& tok, const Tensor<T>& audio, const AcousticTrainConfig& cfg, Rng& rng) {
  auto [mu, y] = tok.reconstruct(audio, rng);
  auto yy = slice_cols(y, 0, audio.dim(1));
  auto loss = scale(l1(yy, audio), static_cast<T>(cfg.l1_weight));
  if (cfg.stft_weight > 0)
    loss = add(loss, scale(multi_resolution_stft_loss(reshape(yy, {audio.size()}), reshape(audio, {audio.size()}),
                                                      cfg.stft_windows),
                           static_cast<T>(cfg.stft_weight)));
  return loss;
}

template <typename T>
TrainCurve train_acoustic(AcousticTokenizer<T>& tok, const std::vector<Utterance>& data, const AcousticTrainConfig& cfg,
                          TrainLog* log = nullptr) {
  detail::check_train_set(data, "acoustic");
  Rng rng(cfg.seed);
  const auto params = tok.parameters();
  AdamW<T> opt(tensors_of(params), 0.0);
  TrainCurve curve;
  const std::size_t hop = tok.config().hop();
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    opt.zero_grad();
    Tensor<T> total;
    for (std::size_t b = 0; b < cfg.batch; ++b) {
      const auto& u = data[rng.index(data.size())];
      auto l = acoustic_loss(tok, detail::random_crop<T>(u.audio, cfg.crop_samples, hop, rng), cfg, rng);
      total = total.defined() ? add(total, l) : l;
    }
    total = scale(total, T(1) / static_cast<T>(cfg.batch));
    const double loss = total.item();
    detail::check_finite(loss, "acoustic", step);
    backward(total);
    const double lr = cosine_lr(step, cfg.steps, cfg.lr, cfg.warmup);
    opt.step(lr);
    curve.losses.push_back(loss);
    if (log) log->write({{"phase", "acoustic"}, {"step", step}, {"stage", 0}, {"loss", loss}, {"lr", lr}});
  }
  return curve;
}

template <typename T>
TrainCurve train_semantic(SemanticTokenizer<T>& tok, AsrProxyDecoder<T>& decoder, const std::vector<Utterance>& data,
                          const SemanticTrainConfig& cfg, TrainLog* log = nullptr) {
  detail::check_train_set(data, "semantic");
  Rng rng(cfg.seed);
  auto params = tok.parameters();
  decoder.collect(params);
  AdamW<T> opt(tensors_of(params), 0.0);
  TrainCurve curve;
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    opt.zero_grad();
    Tensor<T> total;
    for (std::size_t b = 0; b < cfg.batch; ++b) {
      const auto& u = data[rng.index(data.size())];
      auto l = asr_proxy_loss(decoder, tok.features(AcousticTokenizer<T>::audio_tensor(u.audio)), u.phones);
      total = total.defined() ? add(total, l) : l;
    }
    total = scale(total, T(1) / static_cast<T>(cfg.batch));
    const double loss = total.item();
    detail::check_finite(loss, "semantic", step);
    backward(total);
    const double lr = cosine_lr(step, cfg.steps, cfg.lr, cfg.warmup);
    opt.step(lr);
    curve.losses.push_back(loss);
    if (log) log->write({{"phase", "semantic"}, {"step", step}, {"stage", 0}, {"loss", loss}, {"lr", lr}});
  }
  return curve;
}

// Mean reconstruction SNR (dB) of encode -> decode over whole utterances, using mu.
template <typename T>
double reconstruction_snr(const AcousticTokenizer<T>& tok, const std::vector<Utterance>& data) {
  if (data.empty()) throw DataError("reconstruction_snr: no utterances");
  double total = 0;
  for (const auto& u : data) total += eval_metrics(u.audio, tok.decode(tok.encode(u.audio))).snr_db;
  return total / static_cast<double>(data.size());
}

}  // namespace ntd
