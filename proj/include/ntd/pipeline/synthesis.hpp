#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "ntd/pipeline/tts.hpp"

namespace ntd {

// Stop once the stop probability exceeds `threshold` on `patience`
// consecutive frames.
struct StopPolicy {
  double threshold = 0.5;
  std::size_t patience = 3;
  std::size_t run = 0;

  bool update(double p) {
    run = p > threshold ? run + 1 : 0;
    return run >= patience;
  }
  void reset() { run = 0; }
};

struct SynthesisOptions {
  GuidanceConfig guidance;
  std::size_t max_frames = 400;  // over the whole script
  std::uint64_t seed = 0;
};

struct SynthesisResult {
  AudioBuffer audio;
  bool truncated = false;
  std::vector<std::size_t> turn_frames;
  FrameSequence latents;  // sampled z in tokenizer units
  std::vector<double> stop_probs;

  std::size_t frames() const { return latents.size(); }
};

// Replaces the stop head's probability: (frame index within the turn, model probability) -> probability.
using StopOverride = std::function<double(std::size_t, double)>;

// Autoregressive generation. Per step: hidden state of the newest position,
// stop decision, diffusion sample of the next latent, streaming decode of that
// frame, re-encoding of the decoded audio by both tokenizers, and the hybrid
// frame appended to the context. Each turn starts with its speaker tag and
// fresh decoder/encoder state. Frame i draws its noise from (seed, i) only.
template <typename T>
SynthesisResult synthesize(const TtsModel<T>& model, const AcousticTokenizer<T>& acoustic,
                           const SemanticTokenizer<T>& semantic, const std::vector<VoicePrompt>& prompts,
                           const std::vector<ScriptTurn>& script, const SynthesisOptions& opt,
                           const StopOverride& stop_override = {}) {
  opt.guidance.validate();
  if (script.empty()) throw ContractError("synthesize: empty script");
  if (!acoustic.config().same_geometry(semantic.config()) && acoustic.config().hop() != semantic.config().hop())
    throw ConfigError("synthesize: tokenizers have different frame rates");
  std::vector<VoicePrompt> normed = prompts;
  for (auto& p : normed)
    for (auto& z : p.latents) z = model.acoustic_stats.normalize(z);
  auto ctx = build_context(normed, script);

  SynthesisResult res;
  res.audio.sample_rate = acoustic.config().sample_rate;
  typename SequenceModel<T>::State state;
  const std::size_t limit = model.config().seq.max_positions;
  std::size_t global = 0;
  for (std::size_t turn = 0; turn < script.size() && !res.truncated; ++turn) {
    const std::size_t spk = script[turn].speaker_id;
    StreamingDecoder<T> decoder(acoustic.decoder());
    StreamingEncoder<T> ac_encoder(acoustic.encoder());
    StreamingEncoder<T> sem_encoder(semantic.encoder());
    StopPolicy policy;
    std::size_t frames = 0;
    ctx.push_tag(spk);
    while (true) {
      if (global >= opt.max_frames || ctx.size() > limit) {
        res.truncated = true;
        break;
      }
      const auto h = model.seq.extend(ctx, state);
      const auto last = slice_rows(h, h.dim(0) - 1, 1);
      double p;
      {
        NoGradGuard ng;
        p = 1.0 / (1.0 + std::exp(-static_cast<double>(model.seq.stop_logits(last).item())));
      }
      if (stop_override) p = stop_override(frames, p);
      res.stop_probs.push_back(p);
      if (policy.update(p)) break;

      Rng frame_rng(opt.seed * 0x9E3779B97F4A7C15ULL + global + 1);
      const auto zn = sample_latent_frame(model.head, last, opt.guidance, model.sched, frame_rng);
      const auto z = model.acoustic_stats.denormalize(zn);
      const auto chunk = decoder.push({z});
      const auto mu = ac_encoder.push(std::span<const float>(chunk));
      const auto sem = sem_encoder.push(std::span<const float>(chunk));
      if (mu.size() != 1 || sem.size() != 1) throw ContractError("synthesize: expected one encoded frame per decoded frame");
      res.audio.samples.insert(res.audio.samples.end(), chunk.begin(), chunk.end());
      res.latents.push_back(z);
      ctx.push_speech(spk, model.acoustic_stats.normalize(mu[0]), model.semantic_stats.normalize(sem[0]));
      ++frames;
      ++global;
    }
    res.turn_frames.push_back(frames);
  }
  for (auto& s : res.audio.samples) s = std::clamp(s, -1.0f, 1.0f);
  return res;
}

}  // namespace ntd
