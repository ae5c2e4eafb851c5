#pragma once

#include <chrono>
#include <string>
#include <vector>

#include "ntd/pipeline/persist.hpp"
#include "ntd/pipeline/probes.hpp"
#include "ntd/pipeline/synthesis.hpp"
#include "ntd/pipeline/tokenizer_training.hpp"

namespace ntd {

// Everything the desk-scale run needs; defaults reproduce the reference run.
struct DeskConfig {
  std::size_t corpus_size = 440;
  std::uint64_t corpus_seed = 1;
  CorpusConfig corpus;
  TokenizerConfig tokenizer = TokenizerConfig::desk();
  AcousticTrainConfig acoustic;
  SemanticTrainConfig semantic;
  TtsTrainConfig tts;
  std::uint64_t init_seed = 11;
  std::size_t probe_train_utterances = 200;
  std::size_t eval_turns_per_speaker = 10;
  SynthesisOptions synthesis = [] {
    SynthesisOptions o;
    o.max_frames = 60;
    return o;
  }();

  // Overrides from `desk.*` keys, e.g. desk.tts_steps = 200.
  static DeskConfig from(const Config& c) {
    DeskConfig d;
    d.corpus_size = c.get_size("desk.corpus_size", d.corpus_size);
    d.corpus_seed = c.get_size("desk.corpus_seed", d.corpus_seed);
    d.tokenizer = read_tokenizer_config(c);
    d.acoustic.steps = c.get_size("desk.acoustic_steps", d.acoustic.steps);
    d.acoustic.lr = c.get_double("desk.acoustic_lr", d.acoustic.lr);
    d.semantic.steps = c.get_size("desk.semantic_steps", d.semantic.steps);
    d.semantic.lr = c.get_double("desk.semantic_lr", d.semantic.lr);
    const auto tts_steps = c.get_size("desk.tts_steps", d.tts.curriculum.total_steps());
    d.tts.curriculum = CurriculumSchedule::desk(tts_steps);
    const auto lens = c.get_sizes("desk.curriculum_lengths", {});
    const auto steps = c.get_sizes("desk.curriculum_steps", {});
    if (lens.size() != steps.size()) throw ConfigError("desk.curriculum_lengths and desk.curriculum_steps differ in length");
    if (!lens.empty()) {
      d.tts.curriculum.stages.clear();
      for (std::size_t i = 0; i < lens.size(); ++i) d.tts.curriculum.stages.push_back({lens[i], steps[i]});
    }
    d.tts.lr = c.get_double("desk.tts_lr", d.tts.lr);
    d.tts.batch = c.get_size("desk.tts_batch", d.tts.batch);
    d.init_seed = c.get_size("desk.init_seed", d.init_seed);
    d.eval_turns_per_speaker = c.get_size("desk.eval_turns_per_speaker", d.eval_turns_per_speaker);
    d.synthesis.guidance.scale = c.get_double("synth.guidance_scale", d.synthesis.guidance.scale);
    d.synthesis.guidance.steps = c.get_size("synth.steps", d.synthesis.guidance.steps);
    d.synthesis.max_frames = c.get_size("synth.max_frames", d.synthesis.max_frames);
    return d;
  }
};

struct TokenizerReport {
  TrainCurve acoustic_curve, semantic_curve;
  double heldout_snr_db = 0;
  double probe_accuracy = 0;
  double acoustic_seconds = 0, semantic_seconds = 0;
};

struct SpeakerEval {
  std::size_t turns = 0, matched = 0, truncated = 0;
  double match_rate = 0;
  double mean_duration_ratio = 0;    // generated / corpus frames for the same phone count
  double within_half_fraction = 0;   // share of turns with ratio in [0.5, 1.5]
  double speech_text_ratio = 0;      // generated frames per script token
};

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline TokenizerReport pretrain_tokenizers(const Corpus& corpus, const DeskConfig& cfg, AcousticTokenizer<float>& acoustic,
                                           SemanticTokenizer<float>& semantic, TrainLog* log = nullptr) {
  TokenizerReport r;
  auto t0 = std::chrono::steady_clock::now();
  r.acoustic_curve = train_acoustic(acoustic, corpus.train, cfg.acoustic, log);
  r.acoustic_seconds = seconds_since(t0);
  r.heldout_snr_db = reconstruction_snr(acoustic, corpus.heldout);
  t0 = std::chrono::steady_clock::now();
  Rng rng(cfg.semantic.seed + 100);
  AsrProxyDecoder<float> decoder(cfg.tokenizer.semantic_dim, cfg.semantic.decoder, rng);
  r.semantic_curve = train_semantic(semantic, decoder, corpus.train, cfg.semantic, log);
  r.semantic_seconds = seconds_since(t0);
  const std::vector<Utterance> probe_train(corpus.train.begin(),
                                           corpus.train.begin() + static_cast<std::ptrdiff_t>(std::min(
                                                                      cfg.probe_train_utterances, corpus.train.size())));
  r.probe_accuracy = semantic_probe_accuracy(semantic, probe_train, corpus.heldout, cfg.corpus.phone_samples());
  if (log)
    log->write({{"phase", "tokenizer_eval"}, {"heldout_snr_db", r.heldout_snr_db}, {"probe_accuracy", r.probe_accuracy}});
  return r;
}

// Single-turn synthesis for every speaker with prompts and scripts from held-out
// utterances, scored by the independent speaker classifier.
inline SpeakerEval evaluate_speakers(const TtsModel<float>& model, const AcousticTokenizer<float>& acoustic,
                                     const SemanticTokenizer<float>& semantic, const Corpus& corpus,
                                     const DeskConfig& cfg, std::size_t prompt_frames) {
  SpeakerClassifier clf;
  clf.fit(corpus.train);
  std::map<int, std::vector<const Utterance*>> held;
  for (const auto& u : corpus.heldout) held[u.speaker_id].push_back(&u);
  const std::size_t frames_per_phone = cfg.corpus.phone_samples() / cfg.tokenizer.hop();
  SpeakerEval e;
  double ratio_sum = 0;
  std::size_t within = 0, tokens = 0, frames = 0;
  Rng rng(12345);
  for (const auto& [spk, utts] : held) {
    if (utts.size() < 2) continue;
    for (std::size_t r = 0; r < cfg.eval_turns_per_speaker; ++r) {
      const auto* ref = utts[rng.index(utts.size())];
      const Utterance* txt = ref;
      while (txt == ref) txt = utts[rng.index(utts.size())];
      const std::size_t role = 1 + rng.index(vocab::kMaxSpeakers);
      VoicePrompt p;
      p.speaker_id = role;
      const auto mu = acoustic.encode(ref->audio);
      p.latents.assign(mu.begin(), mu.begin() + static_cast<std::ptrdiff_t>(std::min(prompt_frames, mu.size())));
      auto opt = cfg.synthesis;
      opt.seed = rng.next_u64();
      const auto res = synthesize(model, acoustic, semantic, {p}, {{role, txt->phones}}, opt);
      ++e.turns;
      e.truncated += res.truncated;
      if (res.audio.size() >= SpeakerClassifier::kFrame && clf.classify(res.audio) == spk) ++e.matched;
      const double ratio = double(res.frames()) / double(frames_per_phone * txt->phones.size());
      ratio_sum += ratio;
      within += ratio >= 0.5 && ratio <= 1.5;
      tokens += txt->phones.size();
      frames += res.frames();
    }
  }
  if (e.turns) {
    e.match_rate = double(e.matched) / double(e.turns);
    e.mean_duration_ratio = ratio_sum / double(e.turns);
    e.within_half_fraction = double(within) / double(e.turns);
    e.speech_text_ratio = double(frames) / double(tokens);
  }
  return e;
}

}  // namespace ntd
