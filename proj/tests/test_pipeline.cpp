#include <gtest/gtest.h>

#include <cmath>

#include "ntd/pipeline/persist.hpp"
#include "ntd/pipeline/probes.hpp"
#include "ntd/pipeline/synthesis.hpp"
#include "ntd/pipeline/tokenizer_training.hpp"

using namespace ntd;

namespace {

TokenizerConfig tiny_tokenizer() {
  TokenizerConfig c;
  c.stage_channels = {4, 8, 8};
  c.downsample_factors = {16, 20};
  c.latent_dim = 4;
  c.semantic_dim = 3;
  c.ffn_mult = 1;
  return c;
}

TtsModelConfig tiny_tts(const TokenizerConfig& tok) {
  TtsModelConfig c = TtsModelConfig::desk(tok);
  c.seq.model_dim = 16;
  c.seq.heads = 2;
  c.seq.layers = 1;
  c.seq.ffn_mult = 2;
  c.seq.max_positions = 128;
  c.head.cond_dim = 16;
  c.head.width = 16;
  c.head.blocks = 1;
  c.head.time_dim = 8;
  c.diffusion_T = 100;
  return c;
}

const Corpus& small_corpus() {
  static const Corpus c = generate_corpus(default_speakers(), 40, 5);
  return c;
}

struct Tiny {
  Rng rng{1};
  TokenizerConfig tc = tiny_tokenizer();
  AcousticTokenizer<float> acoustic{tc, rng};
  SemanticTokenizer<float> semantic{tc, rng};
  TtsModel<float> model{tiny_tts(tc), rng};
};

std::vector<float> snapshot(const ParamList<float>& ps) {
  std::vector<float> v;
  for (const auto& [n, t] : ps) v.insert(v.end(), t.values().begin(), t.values().end());
  return v;
}

FrameSequence frames(std::size_t n, std::size_t dim, float base) {
  FrameSequence f;
  for (std::size_t i = 0; i < n; ++i) f.push_back(std::vector<float>(dim, base + static_cast<float>(i)));
  return f;
}

}  // namespace

// ---- example layout and truncation -----------------------------------------

TEST(LayoutExample, OneTurnPositionsTargetsAndStopLabels) {
  Rng rng(1);
  VoicePrompt p{2, frames(2, 4, 10)};
  TrainingTurn t{2, {3, 4}, frames(3, 4, 0), frames(3, 3, 5)};
  const auto ex = layout_example({p}, {t}, 0.0, rng);
  // [tag z z | tag p p | tag s s s]
  ASSERT_EQ(ex.ctx.size(), 3u + 3 + 4);
  EXPECT_EQ(ex.ctx.speech_begin, 6u);
  EXPECT_EQ(ex.ctx[6].role, Role::SpeakerTag);
  EXPECT_EQ(ex.predict_at, (std::vector<std::size_t>{6, 7, 8}));
  EXPECT_EQ(ex.targets, t.z);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(ex.ctx[ex.predict_at[k] + 1].latent, ex.targets[k]);
  EXPECT_EQ(ex.stop_candidates, (std::vector<std::size_t>{6, 7, 8, 9}));
  EXPECT_EQ(ex.stop_labels, (std::vector<float>{0, 1, 1, 1}));
}

TEST(LayoutExample, InputNoiseLeavesTargetsClean) {
  Rng rng(2);
  TrainingTurn t{1, {3}, frames(4, 4, 0), frames(4, 3, 0)};
  const auto ex = layout_example({{1, frames(1, 4, 0)}}, {t}, 0.5, rng);
  EXPECT_EQ(ex.targets, t.z);
  EXPECT_NE(ex.ctx[ex.predict_at[0] + 1].latent, t.z[0]);
  EXPECT_EQ(ex.ctx[ex.predict_at[0] + 1].semantic, t.semantic[0]);
}

TEST(LayoutExample, TwoTurnsEachGetTagAndStops) {
  Rng rng(3);
  TrainingTurn a{1, {3}, frames(2, 4, 0), frames(2, 3, 0)};
  TrainingTurn b{2, {5, 6}, frames(3, 4, 0), frames(3, 3, 0)};
  const auto ex = layout_example({{1, frames(1, 4, 0)}, {2, frames(1, 4, 0)}}, {a, b}, 0.0, rng);
  const std::size_t sb = ex.ctx.speech_begin;  // 2+2 prompt, 2+3 script
  ASSERT_EQ(sb, 9u);
  EXPECT_EQ(ex.ctx[sb].token, vocab::speaker_tag(1));
  EXPECT_EQ(ex.ctx[sb + 3].token, vocab::speaker_tag(2));
  EXPECT_EQ(ex.predict_at, (std::vector<std::size_t>{sb, sb + 1, sb + 3, sb + 4, sb + 5}));
  EXPECT_EQ(ex.stop_labels, (std::vector<float>{1, 1, 1, 0, 1, 1, 1}));
}

TEST(TruncateLeft, KeepsPromptAndScriptAndDropsOldestSpeech) {
  Rng rng(4);
  TrainingTurn t{1, {3, 4}, frames(10, 4, 0), frames(10, 3, 0)};
  auto ex = layout_example({{1, frames(3, 4, 100)}}, {t}, 0.0, rng);
  const auto before = ex;
  const std::size_t sb = ex.ctx.speech_begin;  // 4 + 3 = 7
  truncate_left(ex, 12);
  ASSERT_EQ(ex.ctx.size(), 12u);
  EXPECT_EQ(ex.dropped, before.ctx.size() - 12);
  for (std::size_t i = 0; i < sb; ++i) {
    EXPECT_EQ(ex.ctx[i].role, before.ctx[i].role);
    EXPECT_EQ(ex.ctx[i].token, before.ctx[i].token);
    EXPECT_EQ(ex.ctx[i].latent, before.ctx[i].latent);
  }
  // remaining speech is the tail of the original
  for (std::size_t i = sb; i < 12; ++i) EXPECT_EQ(ex.ctx[i].latent, before.ctx[i + ex.dropped].latent);
  // every surviving target is still the frame right after its predictor
  ASSERT_FALSE(ex.predict_at.empty());
  for (std::size_t k = 0; k < ex.predict_at.size(); ++k) {
    EXPECT_GE(ex.predict_at[k], sb);
    EXPECT_EQ(ex.ctx[ex.predict_at[k] + 1].latent, ex.targets[k]);
  }
  EXPECT_EQ(ex.targets.back(), t.z.back());
  EXPECT_EQ(ex.stop_candidates.size(), ex.stop_labels.size());
  EXPECT_EQ(ex.stop_candidates.back(), 11u);
}

TEST(TruncateLeft, NoOpWhenItFits) {
  Rng rng(5);
  TrainingTurn t{1, {3}, frames(2, 4, 0), frames(2, 3, 0)};
  auto ex = layout_example({{1, frames(1, 4, 0)}}, {t}, 0.0, rng);
  const auto n = ex.ctx.size();
  truncate_left(ex, n);
  EXPECT_EQ(ex.ctx.size(), n);
  EXPECT_EQ(ex.dropped, 0u);
}

TEST(TruncateLeft, CapBelowPromptAndScriptIsCapacityError) {
  Rng rng(6);
  TrainingTurn t{1, {3, 4, 5}, frames(5, 4, 0), frames(5, 3, 0)};
  auto ex = layout_example({{1, frames(4, 4, 0)}}, {t}, 0.0, rng);
  EXPECT_THROW(truncate_left(ex, ex.ctx.speech_begin), CapacityError);
}

// ---- curriculum ------------------------------------------------------------

TEST(Curriculum, DeskStagesDoubleFrom64To512) {
  const auto c = CurriculumSchedule::desk(1000);
  ASSERT_EQ(c.stages.size(), 4u);
  EXPECT_EQ(c.stages[0].max_len, 64u);
  EXPECT_EQ(c.stages[1].max_len, 128u);
  EXPECT_EQ(c.stages[2].max_len, 256u);
  EXPECT_EQ(c.stages[3].max_len, 512u);
  EXPECT_EQ(c.total_steps(), 1000u);
}

TEST(Curriculum, BoundariesAtConfiguredSteps) {
  CurriculumSchedule c{{{64, 3}, {128, 2}, {256, 4}}};
  const std::vector<std::size_t> expect{0, 0, 0, 1, 1, 2, 2, 2, 2};
  for (std::size_t s = 0; s < expect.size(); ++s) EXPECT_EQ(c.stage_at(s), expect[s]) << s;
  EXPECT_EQ(c.cap_at(4), 128u);
}

TEST(Curriculum, LengthsMustStrictlyIncrease) {
  EXPECT_THROW((CurriculumSchedule{{{64, 1}, {64, 1}}}.validate()), ConfigError);
  EXPECT_THROW((CurriculumSchedule{{{128, 1}, {64, 1}}}.validate()), ConfigError);
  EXPECT_THROW(CurriculumSchedule{}.validate(), ConfigError);
}

// ---- stop policy and synthesis ---------------------------------------------

TEST(StopPolicy, DebounceOfThree) {
  StopPolicy p;
  EXPECT_FALSE(p.update(0.9));
  EXPECT_FALSE(p.update(0.9));
  EXPECT_FALSE(p.update(0.1));  // resets
  EXPECT_FALSE(p.update(0.9));
  EXPECT_FALSE(p.update(0.9));
  EXPECT_TRUE(p.update(0.9));
  StopPolicy q;
  EXPECT_FALSE(q.update(0.5));  // strictly greater than the threshold
}

class Synthesis : public ::testing::Test, protected Tiny {
 protected:
  std::vector<VoicePrompt> prompts{{1, frames(3, 4, 0.1f)}};
  std::vector<ScriptTurn> script{{1, {3, 4, 5}}};
  SynthesisOptions opt = [] {
    SynthesisOptions o;
    o.max_frames = 20;
    o.guidance.steps = 3;
    return o;
  }();
};

TEST_F(Synthesis, StubStoppingFromFrameKGivesKPlusTwoFrames) {
  for (std::size_t k : {0u, 1u, 5u}) {
    const auto r = synthesize(model, acoustic, semantic, prompts, script, opt,
                              [k](std::size_t i, double) { return i >= k ? 1.0 : 0.0; });
    EXPECT_EQ(r.frames(), k + 2) << k;
    EXPECT_FALSE(r.truncated);
  }
}

TEST_F(Synthesis, ZeroLogitStubNeverStops) {
  const auto r = synthesize(model, acoustic, semantic, prompts, script, opt, [](std::size_t, double) { return 0.5; });
  EXPECT_EQ(r.frames(), opt.max_frames);
  EXPECT_TRUE(r.truncated);
}

TEST_F(Synthesis, SampleCountIsFramesTimesHop) {
  const auto r = synthesize(model, acoustic, semantic, prompts, script, opt,
                            [](std::size_t i, double) { return i >= 4 ? 1.0 : 0.0; });
  EXPECT_EQ(r.audio.size(), r.frames() * tc.hop());
  EXPECT_EQ(r.audio.sample_rate, 8000);
  EXPECT_TRUE(r.audio.all_finite());
}

TEST_F(Synthesis, SameSeedReproducesAudioExactly) {
  auto stub = [](std::size_t i, double) { return i >= 6 ? 1.0 : 0.0; };
  const auto a = synthesize(model, acoustic, semantic, prompts, script, opt, stub);
  const auto b = synthesize(model, acoustic, semantic, prompts, script, opt, stub);
  EXPECT_EQ(a.audio.samples, b.audio.samples);
  auto o2 = opt;
  o2.seed = 99;
  const auto c = synthesize(model, acoustic, semantic, prompts, script, o2, stub);
  EXPECT_NE(a.audio.samples, c.audio.samples);
}

TEST_F(Synthesis, DecodedAudioMatchesOfflineDecodeOfLatents) {
  const auto r = synthesize(model, acoustic, semantic, prompts, script, opt,
                            [](std::size_t i, double) { return i >= 5 ? 1.0 : 0.0; });
  const auto offline = acoustic.decode(r.latents);
  ASSERT_EQ(offline.size(), r.audio.size());
  for (std::size_t i = 0; i < offline.size(); ++i)
    EXPECT_NEAR(std::clamp(offline.samples[i], -1.f, 1.f), r.audio.samples[i], 1e-5);
}

TEST_F(Synthesis, TurnsRunInOrderWithTheirOwnStops) {
  std::vector<VoicePrompt> two{{1, frames(2, 4, 0.1f)}, {3, frames(2, 4, -0.1f)}};
  std::vector<ScriptTurn> dialog{{3, {1, 2}}, {1, {4}}};
  const auto r = synthesize(model, acoustic, semantic, two, dialog, opt,
                            [](std::size_t i, double) { return i >= 2 ? 1.0 : 0.0; });
  EXPECT_EQ(r.turn_frames, (std::vector<std::size_t>{4, 4}));
  EXPECT_EQ(r.audio.size(), 8 * tc.hop());
}

TEST_F(Synthesis, Errors) {
  EXPECT_THROW(synthesize(model, acoustic, semantic, prompts, {}, opt), ContractError);
  EXPECT_THROW(synthesize(model, acoustic, semantic, prompts, {{2, {1}}}, opt), DataError);
  auto bad = opt;
  bad.guidance.steps = 0;
  EXPECT_THROW(synthesize(model, acoustic, semantic, prompts, script, bad), ConfigError);
}

// ---- TTS training ----------------------------------------------------------

TEST(TrainTts, FrozenTokenizersCurriculumTraceAndCheckpoint) {
  Tiny t;
  const auto corpus = prepare_tts_corpus(small_corpus().train, t.acoustic, t.semantic);
  const auto before_a = snapshot(t.acoustic.parameters()), before_s = snapshot(t.semantic.parameters());
  TtsTrainConfig cfg;
  cfg.curriculum = {{{40, 3}, {80, 2}, {128, 2}}};
  cfg.batch = 2;
  cfg.examples.prompt_frames = 4;
  const auto res = train_tts(t.model, corpus, t.acoustic, t.semantic, cfg);
  EXPECT_EQ(snapshot(t.acoustic.parameters()), before_a);
  EXPECT_EQ(snapshot(t.semantic.parameters()), before_s);
  EXPECT_EQ(res.max_tokenizer_grad, 0.0);
  ASSERT_EQ(res.transitions.size(), 3u);
  EXPECT_EQ(res.transitions[0].step, 0u);
  EXPECT_EQ(res.transitions[1].step, 3u);
  EXPECT_EQ(res.transitions[1].max_len, 80u);
  EXPECT_EQ(res.transitions[2].step, 5u);
  EXPECT_EQ(res.diffusion_losses.size(), 7u);
  EXPECT_GT(res.truncated_examples, 0u);
  for (double l : res.diffusion_losses) EXPECT_TRUE(std::isfinite(l));
  // stats come from the corpus and travel with the checkpoint
  EXPECT_EQ(t.model.acoustic_stats.mean, corpus.acoustic_stats.mean);
  const auto ck = t.model.to_checkpoint();
  const auto back = TtsModel<float>::from_checkpoint(Checkpoint::deserialize(ck.serialize()));
  EXPECT_EQ(back.to_checkpoint().serialize(), ck.serialize());
  EXPECT_EQ(back.semantic_stats.stddev, t.model.semantic_stats.stddev);
}

TEST(TrainTts, UnusableCurriculumIsConfigError) {
  Tiny t;
  const auto corpus = prepare_tts_corpus(small_corpus().train, t.acoustic, t.semantic);
  TtsTrainConfig cfg;
  cfg.curriculum = {{{64, 1}, {32, 1}}};
  EXPECT_THROW(train_tts(t.model, corpus, t.acoustic, t.semantic, cfg), ConfigError);
}

TEST(TrainTts, PreparedCorpusStatsStandardize) {
  Tiny t;
  const auto corpus = prepare_tts_corpus(small_corpus().train, t.acoustic, t.semantic);
  double m = 0, v = 0;
  std::size_t n = 0;
  for (const auto& it : corpus.items)
    for (const auto& f : it.mu) {
      const auto z = corpus.acoustic_stats.normalize(f);
      m += z[0];
      v += z[0] * z[0];
      ++n;
    }
  EXPECT_NEAR(m / n, 0.0, 1e-4);
  EXPECT_NEAR(v / n, 1.0, 0.01);
  EXPECT_EQ(corpus.by_speaker.size(), 4u);
}

// ---- tokenizer pretraining -------------------------------------------------

TEST(PretrainTokenizers, AcousticOverfitsOneUtterance) {
  Rng rng(7);
  AcousticTokenizer<float> tok(tiny_tokenizer(), rng);
  const std::vector<Utterance> one{small_corpus().train[0]};
  AcousticTrainConfig cfg;
  cfg.steps = 150;
  cfg.batch = 1;
  cfg.lr = 5e-3;
  const auto curve = train_acoustic(tok, one, cfg);
  EXPECT_LE(curve.losses.back(), 0.1 * curve.losses.front());
}

TEST(PretrainTokenizers, SemanticOverfitsOneUtterance) {
  Rng rng(8);
  SemanticTokenizer<float> tok(tiny_tokenizer(), rng);
  SemanticTrainConfig cfg;
  cfg.steps = 150;
  cfg.batch = 1;
  cfg.decoder.dim = 16;
  cfg.decoder.heads = 2;
  cfg.decoder.layers = 1;
  AsrProxyDecoder<float> dec(tok.config().semantic_dim, cfg.decoder, rng);
  const std::vector<Utterance> one{small_corpus().train[0]};
  const auto curve = train_semantic(tok, dec, one, cfg);
  EXPECT_LE(curve.losses.back(), 0.1 * curve.losses.front());
}

TEST(PretrainTokenizers, FixedSeedIsDeterministic) {
  auto run = [] {
    Rng rng(9);
    AcousticTokenizer<float> tok(tiny_tokenizer(), rng);
    AcousticTrainConfig cfg;
    cfg.steps = 5;
    cfg.batch = 2;
    return train_acoustic(tok, small_corpus().train, cfg).losses;
  };
  EXPECT_EQ(run(), run());
}

TEST(PretrainTokenizers, NonFiniteLossAborts) {
  Rng rng(10);
  AcousticTokenizer<float> tok(tiny_tokenizer(), rng);
  auto u = small_corpus().train[0];
  for (auto& s : u.audio.samples) s = std::numeric_limits<float>::quiet_NaN();
  AcousticTrainConfig cfg;
  cfg.steps = 3;
  cfg.batch = 1;
  try {
    train_acoustic(tok, {u}, cfg);
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("step 0"), std::string::npos) << e.what();
  }
}

TEST(PretrainTokenizers, CheckpointRoundTripIsExact) {
  Rng rng(11);
  AcousticTokenizer<float> a(tiny_tokenizer(), rng);
  SemanticTokenizer<float> s(tiny_tokenizer(), rng);
  const auto& audio = small_corpus().train[1].audio;
  const auto a2 = acoustic_from_checkpoint(Checkpoint::deserialize(to_checkpoint(a).serialize()));
  const auto s2 = semantic_from_checkpoint(Checkpoint::deserialize(to_checkpoint(s).serialize()));
  EXPECT_EQ(a2.encode(audio), a.encode(audio));
  EXPECT_EQ(s2.encode(audio), s.encode(audio));
  EXPECT_TRUE(a2.config().same_geometry(a.config()));
  EXPECT_THROW(semantic_from_checkpoint(to_checkpoint(a)), FormatError);
}

// ---- evaluation oracles ----------------------------------------------------

TEST(SpeakerClassifier, SeparatesCorpusVoices) {
  const auto c = generate_corpus(default_speakers(), 200, 12);
  SpeakerClassifier clf;
  clf.fit(c.train);
  std::size_t ok = 0;
  for (const auto& u : c.heldout) ok += clf.classify(u.audio) == u.speaker_id;
  EXPECT_GE(double(ok) / c.heldout.size(), 0.95);
}

TEST(SpeakerClassifier, UnfittedIsContractError) {
  SpeakerClassifier clf;
  EXPECT_THROW(clf.classify(small_corpus().train[0].audio), ContractError);
}

TEST(LinearProbe, LearnsSeparableClasses) {
  Rng rng(13);
  std::vector<std::vector<float>> x;
  std::vector<std::size_t> y;
  for (int i = 0; i < 600; ++i) {
    const std::size_t c = i % 3;
    x.push_back({static_cast<float>(3.0 * c + rng.normal() * 0.3), static_cast<float>(rng.normal())});
    y.push_back(c);
  }
  LinearProbe p;
  p.fit(x, y, 3);
  EXPECT_GE(p.accuracy(x, y), 0.99);
}

TEST(LinearProbe, FramePhoneLabels) {
  Utterance u;
  u.phones = {7, 2, 9};
  EXPECT_EQ(frame_phone_labels(u, 15, 320, 1600),
            (std::vector<std::size_t>{7, 7, 7, 7, 7, 2, 2, 2, 2, 2, 9, 9, 9, 9, 9}));
}
