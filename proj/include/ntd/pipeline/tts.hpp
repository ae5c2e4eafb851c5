#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "ntd/diffusion/sampler.hpp"
#include "ntd/io/checkpoint.hpp"
#include "ntd/io/config.hpp"
#include "ntd/io/corpus.hpp"
#include "ntd/numcore/optim.hpp"
#include "ntd/pipeline/log.hpp"
#include "ntd/sequencer/model.hpp"
#include "ntd/tokenizers/semantic.hpp"

namespace ntd {

// Per-dimension standardization of latent or semantic frames.
struct LatentStats {
  std::vector<float> mean, stddev;

  static LatentStats fit(const std::vector<const FrameSequence*>& seqs) {
    LatentStats s;
    std::size_t n = 0;
    std::vector<double> m, v;
    for (const auto* fs : seqs)
      for (const auto& f : *fs) {
        if (m.empty()) m.assign(f.size(), 0), v.assign(f.size(), 0);
        for (std::size_t d = 0; d < f.size(); ++d) m[d] += f[d];
        ++n;
      }
    if (n < 2) throw DataError("latent statistics need at least two frames");
    for (auto& x : m) x /= static_cast<double>(n);
    for (const auto* fs : seqs)
      for (const auto& f : *fs)
        for (std::size_t d = 0; d < f.size(); ++d) v[d] += (f[d] - m[d]) * (f[d] - m[d]);
    for (std::size_t d = 0; d < m.size(); ++d) {
      s.mean.push_back(static_cast<float>(m[d]));
      s.stddev.push_back(static_cast<float>(std::sqrt(v[d] / static_cast<double>(n - 1)) + 1e-6));
    }
    return s;
  }

  static LatentStats identity(std::size_t dim) { return {std::vector<float>(dim, 0.f), std::vector<float>(dim, 1.f)}; }

  std::vector<float> normalize(const std::vector<float>& x) const {
    check(x);
    std::vector<float> y(x.size());
    for (std::size_t d = 0; d < x.size(); ++d) y[d] = (x[d] - mean[d]) / stddev[d];
    return y;
  }
  std::vector<float> denormalize(const std::vector<float>& y) const {
    check(y);
    std::vector<float> x(y.size());
    for (std::size_t d = 0; d < y.size(); ++d) x[d] = y[d] * stddev[d] + mean[d];
    return x;
  }
  FrameSequence normalize(const FrameSequence& fs) const {
    FrameSequence out;
    out.reserve(fs.size());
    for (const auto& f : fs) out.push_back(normalize(f));
    return out;
  }

 private:
  void check(const std::vector<float>& x) const {
    if (x.size() != mean.size())
      throw ShapeError("latent stats: vector has " + std::to_string(x.size()) + " entries, expected " +
                       std::to_string(mean.size()));
  }
};

struct TtsModelConfig {
  SequencerConfig seq;
  DiffusionHeadConfig head;
  std::size_t diffusion_T = 1000;

  // Desk scale: 4 layers, width 128, 4 heads, 512 positions.
  static TtsModelConfig desk(const TokenizerConfig& tok) {
    TtsModelConfig c;
    c.seq.latent_dim = tok.latent_dim;
    c.seq.semantic_dim = tok.semantic_dim;
    c.head.latent_dim = tok.latent_dim;
    c.head.cond_dim = c.seq.model_dim;
    return c;
  }
};

// Everything learnable in TTS training (sequence model + diffusion head), plus
// the frame statistics that map tokenizer outputs into model units.
template <typename T = float>
class TtsModel {
 public:
  TtsModel() = default;
  TtsModel(const TtsModelConfig& cfg, Rng& rng)
      : cfg_(cfg),
        seq(cfg.seq, rng),
        head(cfg.head, rng),
        sched(NoiseSchedule::cosine(cfg.diffusion_T)),
        acoustic_stats(LatentStats::identity(cfg.seq.latent_dim)),
        semantic_stats(LatentStats::identity(cfg.seq.semantic_dim)) {
    if (cfg.head.cond_dim != cfg.seq.model_dim) throw ConfigError("tts: diffusion head cond_dim must equal model_dim");
    if (cfg.head.latent_dim != cfg.seq.latent_dim) throw ConfigError("tts: diffusion head and sequencer latent widths differ");
  }

  const TtsModelConfig& config() const { return cfg_; }

  void collect(ParamList<T>& out) const {
    seq.collect(out);
    head.collect(out, "head");
  }
  ParamList<T> parameters() const {
    ParamList<T> p;
    collect(p);
    return p;
  }

  Checkpoint to_checkpoint() const {
    Config c;
    c.set("kind", std::string("tts"));
    c.set("seq.latent_dim", double(cfg_.seq.latent_dim));
    c.set("seq.semantic_dim", double(cfg_.seq.semantic_dim));
    c.set("seq.model_dim", double(cfg_.seq.model_dim));
    c.set("seq.heads", double(cfg_.seq.heads));
    c.set("seq.layers", double(cfg_.seq.layers));
    c.set("seq.ffn_mult", double(cfg_.seq.ffn_mult));
    c.set("seq.max_positions", double(cfg_.seq.max_positions));
    c.set("head.width", double(cfg_.head.width));
    c.set("head.blocks", double(cfg_.head.blocks));
    c.set("head.time_dim", double(cfg_.head.time_dim));
    c.set("diffusion.T", double(cfg_.diffusion_T));
    c.set_list("stats.acoustic.mean", acoustic_stats.mean);
    c.set_list("stats.acoustic.std", acoustic_stats.stddev);
    c.set_list("stats.semantic.mean", semantic_stats.mean);
    c.set_list("stats.semantic.std", semantic_stats.stddev);
    Checkpoint ck;
    ck.config = c.to_string();
    ck.add(parameters());
    return ck;
  }

  static TtsModel from_checkpoint(const Checkpoint& ck) {
    const auto c = Config::parse(ck.config, "checkpoint config");
    if (c.get_string("kind", "") != "tts") throw FormatError("expected a tts checkpoint");
    TtsModelConfig cfg;
    cfg.seq.latent_dim = c.get_size("seq.latent_dim", cfg.seq.latent_dim);
    cfg.seq.semantic_dim = c.get_size("seq.semantic_dim", cfg.seq.semantic_dim);
    cfg.seq.model_dim = c.get_size("seq.model_dim", cfg.seq.model_dim);
    cfg.seq.heads = c.get_size("seq.heads", cfg.seq.heads);
    cfg.seq.layers = c.get_size("seq.layers", cfg.seq.layers);
    cfg.seq.ffn_mult = c.get_size("seq.ffn_mult", cfg.seq.ffn_mult);
    cfg.seq.max_positions = c.get_size("seq.max_positions", cfg.seq.max_positions);
    cfg.head.latent_dim = cfg.seq.latent_dim;
    cfg.head.cond_dim = cfg.seq.model_dim;
    cfg.head.width = c.get_size("head.width", cfg.head.width);
    cfg.head.blocks = c.get_size("head.blocks", cfg.head.blocks);
    cfg.head.time_dim = c.get_size("head.time_dim", cfg.head.time_dim);
    cfg.diffusion_T = c.get_size("diffusion.T", cfg.diffusion_T);
    Rng rng(0);
    TtsModel m(cfg, rng);
    auto floats = [&](const std::string& k) {
      const auto d = c.get_doubles(k, {});
      return std::vector<float>(d.begin(), d.end());
    };
    m.acoustic_stats = {floats("stats.acoustic.mean"), floats("stats.acoustic.std")};
    m.semantic_stats = {floats("stats.semantic.mean"), floats("stats.semantic.std")};
    if (m.acoustic_stats.mean.size() != cfg.seq.latent_dim || m.acoustic_stats.stddev.size() != cfg.seq.latent_dim ||
        m.semantic_stats.mean.size() != cfg.seq.semantic_dim || m.semantic_stats.stddev.size() != cfg.seq.semantic_dim)
      throw FormatError("tts checkpoint: frame statistics missing or of the wrong width");
    ck.restore(m.parameters());
    return m;
  }

 private:
  TtsModelConfig cfg_;

 public:
  SequenceModel<T> seq;
  DiffusionHead<T> head;
  NoiseSchedule sched;
  LatentStats acoustic_stats, semantic_stats;
};

// ---- training data ---------------------------------------------------------

// Frozen-tokenizer view of one utterance: acoustic means, and both tokenizers'
// encodings of the acoustic tokenizer's own reconstruction (what synthesis
// feeds back after decoding a frame).
struct TtsItem {
  const Utterance* utterance = nullptr;
  FrameSequence mu;
  FrameSequence reencoded;
  FrameSequence semantic;
};

struct TtsCorpus {
  std::vector<TtsItem> items;
  std::map<int, std::vector<std::size_t>> by_speaker;
  LatentStats acoustic_stats, semantic_stats;
  double sigma_scale = 0.01;
};

template <typename T>
TtsCorpus prepare_tts_corpus(const std::vector<Utterance>& data, const AcousticTokenizer<T>& acoustic,
                             const SemanticTokenizer<T>& semantic, std::uint64_t seed = 7) {
  if (data.empty()) throw DataError("tts corpus: no utterances");
  TtsCorpus c;
  c.sigma_scale = acoustic.config().sigma_scale;
  for (std::size_t i = 0; i < data.size(); ++i) {
    TtsItem it;
    it.utterance = &data[i];
    it.mu = acoustic.encode(data[i].audio);
    const auto recon = acoustic.decode(acoustic.sample(it.mu, seed * 1000003 + i * 4096));
    it.reencoded = acoustic.encode(recon);
    it.semantic = semantic.encode(recon);
    if (it.semantic.size() != it.mu.size() || it.reencoded.size() != it.mu.size())
      throw ContractError("tts corpus: acoustic and semantic frame counts differ");
    c.by_speaker[data[i].speaker_id].push_back(i);
    c.items.push_back(std::move(it));
  }
  std::vector<const FrameSequence*> mus, sems;
  for (const auto& it : c.items) {
    mus.push_back(&it.mu);
    sems.push_back(&it.semantic);
  }
  c.acoustic_stats = LatentStats::fit(mus);
  c.semantic_stats = LatentStats::fit(sems);
  return c;
}

// Speech for one turn, already in model units.
struct TrainingTurn {
  std::size_t speaker_id = 1;
  std::vector<std::size_t> phones;
  FrameSequence z;  // targets
  FrameSequence semantic;
  FrameSequence inputs = {};  // acoustic half of the teacher-forced inputs; empty means z
};

struct TrainingExample {
  ContextSequence ctx;
  std::vector<std::size_t> predict_at;  // hidden state at this position predicts targets[k]
  FrameSequence targets;
  std::vector<std::size_t> stop_candidates;  // positions that receive a stop loss
  std::vector<float> stop_labels;
  std::size_t dropped = 0;  // speech positions removed by truncation
};

// Teacher-forced layout: prompts and script as in build_context, then for each
// turn a speaker tag followed by its frames. Frame k of a turn is predicted at
// the position just before it. The positions predicting a turn's last two
// frames and its final frame position are labelled "stop", so a debounce of 3
// fires exactly at the turn's length. `input_noise` perturbs the speech inputs
// (never the targets).
inline TrainingExample layout_example(const std::vector<VoicePrompt>& prompts, const std::vector<TrainingTurn>& turns,
                                      double input_noise, Rng& rng) {
  std::vector<ScriptTurn> script;
  for (const auto& t : turns) script.push_back({t.speaker_id, t.phones});
  TrainingExample ex;
  ex.ctx = build_context(prompts, script);
  for (const auto& t : turns) {
    if (t.z.size() != t.semantic.size()) throw ShapeError("training turn: latent and semantic frame counts differ");
    if (t.z.empty()) throw DataError("training turn without speech frames");
    if (!t.inputs.empty() && t.inputs.size() != t.z.size())
      throw ShapeError("training turn: input and target frame counts differ");
    ex.ctx.push_tag(t.speaker_id);
    std::vector<std::size_t> preds;
    for (std::size_t k = 0; k < t.z.size(); ++k) {
      preds.push_back(ex.ctx.size() - 1);
      ex.targets.push_back(t.z[k]);
      auto in = t.inputs.empty() ? t.z[k] : t.inputs[k];
      if (input_noise > 0)
        for (auto& v : in) v += static_cast<float>(input_noise * rng.normal());
      ex.ctx.push_speech(t.speaker_id, std::move(in), t.semantic[k]);
    }
    const std::size_t last = ex.ctx.size() - 1;
    for (std::size_t k = 0; k < preds.size(); ++k) {
      ex.predict_at.push_back(preds[k]);
      ex.stop_candidates.push_back(preds[k]);
      ex.stop_labels.push_back(k + 2 >= preds.size() ? 1.f : 0.f);
    }
    ex.stop_candidates.push_back(last);
    ex.stop_labels.push_back(1.f);
  }
  return ex;
}

// Drops the oldest speech positions until the example fits in `cap`;
// prompts and script are never cut. Targets whose predicting position was
// dropped go with it.
inline void truncate_left(TrainingExample& ex, std::size_t cap) {
  if (ex.ctx.size() <= cap) return;
  const std::size_t sb = ex.ctx.speech_begin;
  if (sb >= cap)
    throw CapacityError("prompts and script need " + std::to_string(sb) + " positions, sequence cap is " +
                        std::to_string(cap));
  const std::size_t drop = ex.ctx.size() - cap;
  auto& pos = ex.ctx.positions;
  pos.erase(pos.begin() + static_cast<std::ptrdiff_t>(sb), pos.begin() + static_cast<std::ptrdiff_t>(sb + drop));
  auto kept = [&](std::size_t p) { return p < sb || p >= sb + drop; };
  auto remap = [&](std::size_t p) { return p < sb ? p : p - drop; };
  TrainingExample out;
  out.ctx = std::move(ex.ctx);
  out.dropped = ex.dropped + drop;
  for (std::size_t k = 0; k < ex.predict_at.size(); ++k)
    if (kept(ex.predict_at[k])) {
      out.predict_at.push_back(remap(ex.predict_at[k]));
      out.targets.push_back(ex.targets[k]);
    }
  for (std::size_t k = 0; k < ex.stop_candidates.size(); ++k)
    if (kept(ex.stop_candidates[k])) {
      out.stop_candidates.push_back(remap(ex.stop_candidates[k]));
      out.stop_labels.push_back(ex.stop_labels[k]);
    }
  ex = std::move(out);
}

struct ExampleOptions {
  std::size_t max_turns = 2;
  std::size_t prompt_frames = 10;
  double input_noise = 0.5;
};

// Random dialogue of 1..max_turns turns by distinct speakers. Speaker
// numbers (roles) are a random assignment of 1..4, so identity must come
// from the voice prompt. Prompts are from other utterances of the same voice.
inline TrainingExample sample_example(const TtsCorpus& corpus, const ExampleOptions& opt, Rng& rng) {
  const std::size_t voices = corpus.by_speaker.size();
  const std::size_t n_turns = 1 + rng.index(std::min({opt.max_turns, voices, vocab::kMaxSpeakers}));
  std::vector<std::size_t> picks;
  while (picks.size() < n_turns) {
    const std::size_t i = rng.index(corpus.items.size());
    const int spk = corpus.items[i].utterance->speaker_id;
    if (std::none_of(picks.begin(), picks.end(), [&](std::size_t j) { return corpus.items[j].utterance->speaker_id == spk; }))
      picks.push_back(i);
  }
  std::vector<std::size_t> roles{1, 2, 3, 4};
  for (std::size_t i = roles.size() - 1; i > 0; --i) std::swap(roles[i], roles[rng.index(i + 1)]);

  const double sd = std::sqrt(corpus.sigma_scale);
  auto noisy = [&](const std::vector<float>& mu) {
    std::vector<float> z(mu.size());
    for (std::size_t d = 0; d < mu.size(); ++d) z[d] = static_cast<float>(mu[d] + sd * rng.normal() * rng.normal());
    return corpus.acoustic_stats.normalize(z);
  };
  std::vector<VoicePrompt> prompts;
  std::vector<TrainingTurn> turns;
  for (std::size_t k = 0; k < picks.size(); ++k) {
    const auto& item = corpus.items[picks[k]];
    const auto& same = corpus.by_speaker.at(item.utterance->speaker_id);
    std::size_t ref = same[rng.index(same.size())];
    for (int tries = 0; ref == picks[k] && same.size() > 1 && tries < 8; ++tries) ref = same[rng.index(same.size())];
    VoicePrompt p;
    p.speaker_id = roles[k];
    const auto& rmu = corpus.items[ref].mu;
    for (std::size_t f = 0; f < std::min(opt.prompt_frames, rmu.size()); ++f) p.latents.push_back(noisy(rmu[f]));
    prompts.push_back(std::move(p));
    TrainingTurn t;
    t.speaker_id = roles[k];
    t.phones = item.utterance->phones;
    for (const auto& m : item.mu) t.z.push_back(noisy(m));
    t.inputs = corpus.acoustic_stats.normalize(item.reencoded);
    t.semantic = corpus.semantic_stats.normalize(item.semantic);
    turns.push_back(std::move(t));
  }
  return layout_example(prompts, turns, opt.input_noise, rng);
}

template <typename T>
struct ExampleLoss {
  Tensor<T> diffusion, stop;
};

template <typename T>
ExampleLoss<T> example_loss(const TtsModel<T>& model, const TrainingExample& ex, Rng& rng,
                            const DiffusionLossOptions& opt = {}) {
  const auto h = model.seq.forward(ex.ctx);
  ExampleLoss<T> out;
  if (ex.predict_at.empty()) {
    out.diffusion = Tensor<T>::scalar(T(0));
  } else {
    const std::size_t D = model.config().seq.latent_dim;
    std::vector<T> z0;
    for (const auto& f : ex.targets) z0.insert(z0.end(), f.begin(), f.end());
    out.diffusion = diffusion_loss(model.head, gather_rows(h, ex.predict_at),
                                   Tensor<T>({ex.targets.size(), D}, std::move(z0)), model.sched, rng, opt);
  }
  if (ex.stop_candidates.empty()) {
    out.stop = Tensor<T>::scalar(T(0));
  } else {
    out.stop = bce_with_logits(model.seq.stop_logits(gather_rows(h, ex.stop_candidates)),
                               std::vector<T>(ex.stop_labels.begin(), ex.stop_labels.end()));
  }
  return out;
}

// ---- curriculum and training -----------------------------------------------

struct CurriculumSchedule {
  struct Stage {
    std::size_t max_len;
    std::size_t steps;
  };
  std::vector<Stage> stages;

  // Desk default: 64 -> 128 -> 256 -> 512.
  static CurriculumSchedule desk(std::size_t total_steps = 1000) {
    const std::size_t a = total_steps / 5, b = total_steps * 3 / 10, c = total_steps * 3 / 10;
    return {{{64, a}, {128, b}, {256, c}, {512, total_steps - a - b - c}}};
  }

  void validate() const {
    if (stages.empty()) throw ConfigError("curriculum: no stages");
    for (std::size_t i = 0; i < stages.size(); ++i) {
      if (stages[i].max_len == 0) throw ConfigError("curriculum: stage length must be positive");
      if (i && stages[i].max_len <= stages[i - 1].max_len)
        throw ConfigError("curriculum: stage lengths must strictly increase");
    }
  }

  std::size_t total_steps() const {
    std::size_t n = 0;
    for (const auto& s : stages) n += s.steps;
    return n;
  }

  std::size_t stage_at(std::size_t step) const {
    std::size_t end = 0;
    for (std::size_t i = 0; i < stages.size(); ++i) {
      end += stages[i].steps;
      if (step < end) return i;
    }
    return stages.size() - 1;
  }

  std::size_t cap_at(std::size_t step) const { return stages[stage_at(step)].max_len; }
};

struct TtsTrainConfig {
  CurriculumSchedule curriculum = CurriculumSchedule::desk();
  std::size_t batch = 8;
  double lr = 1e-3;
  std::size_t warmup = 20;
  double weight_decay = 0.01;
  double clip = 1.0;
  double stop_weight = 1.0;
  ExampleOptions examples;
  DiffusionLossOptions diffusion;
  std::uint64_t seed = 3;
};

struct CurriculumEvent {
  std::size_t step, stage, max_len;
};

struct TtsTrainResult {
  std::vector<double> diffusion_losses, stop_losses;
  std::vector<CurriculumEvent> transitions;  // first step of every stage
  std::vector<std::size_t> stage_of_step;
  std::size_t truncated_examples = 0;
  double max_tokenizer_grad = 0;
};

namespace detail {

template <typename T>
double grad_norm_of(const ParamList<T>& params) {
  double s = 0;
  for (const auto& [n, t] : params)
    if (t.has_grad())
      for (T g : t.node()->grad) s += static_cast<double>(g) * g;
  return std::sqrt(s);
}

}  // namespace detail

// Trains the sequence model and diffusion head on next-frame diffusion loss
// (plus the stop head) with the tokenizers frozen. Sets the model's frame
// statistics from the corpus.
template <typename T>
TtsTrainResult train_tts(TtsModel<T>& model, const TtsCorpus& corpus, const AcousticTokenizer<T>& acoustic,
                         const SemanticTokenizer<T>& semantic, const TtsTrainConfig& cfg, TrainLog* log = nullptr) {
  cfg.curriculum.validate();
  if (corpus.items.empty()) throw DataError("train_tts: empty corpus");
  model.acoustic_stats = corpus.acoustic_stats;
  model.semantic_stats = corpus.semantic_stats;
  const auto params = model.parameters();
  auto frozen = acoustic.parameters();
  semantic.collect(frozen);
  for (auto& [n, t] : frozen) Tensor<T>(t).zero_grad();  // leftovers from pretraining
  AdamW<T> opt(tensors_of(params), cfg.weight_decay);
  Rng rng(cfg.seed);
  TtsTrainResult res;
  const std::size_t total = cfg.curriculum.total_steps();
  for (std::size_t step = 0; step < total; ++step) {
    const std::size_t stage = cfg.curriculum.stage_at(step), cap = cfg.curriculum.stages[stage].max_len;
    if (step == 0 || stage != res.stage_of_step.back()) res.transitions.push_back({step, stage, cap});
    res.stage_of_step.push_back(stage);
    opt.zero_grad();
    Tensor<T> dsum, ssum;
    for (std::size_t b = 0; b < cfg.batch; ++b) {
      auto ex = sample_example(corpus, cfg.examples, rng);
      if (ex.ctx.size() > cap) {
        truncate_left(ex, cap);
        ++res.truncated_examples;
      }
      auto l = example_loss(model, ex, rng, cfg.diffusion);
      dsum = dsum.defined() ? add(dsum, l.diffusion) : l.diffusion;
      ssum = ssum.defined() ? add(ssum, l.stop) : l.stop;
    }
    const T inv = T(1) / static_cast<T>(cfg.batch);
    dsum = scale(dsum, inv);
    ssum = scale(ssum, inv);
    const double dl = dsum.item(), sl = ssum.item();
    if (!std::isfinite(dl) || !std::isfinite(sl))
      throw TrainingError("tts training diverged at step " + std::to_string(step) + ": diffusion loss " +
                          std::to_string(dl) + ", stop loss " + std::to_string(sl));
    backward(add(dsum, scale(ssum, static_cast<T>(cfg.stop_weight))));
    const double tok_grad = detail::grad_norm_of(frozen);
    res.max_tokenizer_grad = std::max(res.max_tokenizer_grad, tok_grad);
    if (tok_grad != 0) throw ContractError("tts training produced a gradient on a frozen tokenizer");
    const double lr = cosine_lr(step, total, cfg.lr, cfg.warmup);
    opt.step(lr, 1.0, cfg.clip);
    res.diffusion_losses.push_back(dl);
    res.stop_losses.push_back(sl);
    if (log)
      log->write({{"phase", "tts"}, {"step", step}, {"stage", stage}, {"max_len", cap}, {"loss", dl},
                  {"stop_loss", sl}, {"lr", lr}});
  }
  return res;
}

// Mean of the first and last `window` entries.
inline std::pair<double, double> smoothed_ends(const std::vector<double>& v, std::size_t window = 50) {
  if (v.empty()) throw ContractError("smoothed_ends: empty series");
  const std::size_t w = std::min(window, v.size());
  const double first = std::accumulate(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(w), 0.0) / double(w);
  const double last = std::accumulate(v.end() - static_cast<std::ptrdiff_t>(w), v.end(), 0.0) / double(w);
  return {first, last};
}

}  // namespace ntd
