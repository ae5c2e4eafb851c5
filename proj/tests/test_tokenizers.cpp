#include <gtest/gtest.h>

#include <cmath>

#include "ntd/numcore/optim.hpp"
#include "ntd/tokenizers/semantic.hpp"

using namespace ntd;

namespace {

// Paper-scale factor stack with tiny channels so tests stay fast.
TokenizerConfig slim_paper_config() {
  auto c = TokenizerConfig::paper_scale();
  c.stage_channels = {2, 2, 2, 2, 2, 2, 2};
  c.latent_dim = 4;
  c.semantic_dim = 4;
  c.ffn_mult = 1;
  return c;
}

AudioBuffer random_audio(std::size_t n, int rate, std::uint64_t seed) {
  Rng rng(seed);
  AudioBuffer a;
  a.sample_rate = rate;
  for (std::size_t i = 0; i < n; ++i) a.samples.push_back(static_cast<float>(0.3 * rng.normal()));
  return a;
}

double max_abs_diff(const FrameSequence& a, const FrameSequence& b) {
  EXPECT_EQ(a.size(), b.size());
  double m = 0;
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i)
    for (std::size_t d = 0; d < a[i].size(); ++d) m = std::max(m, double(std::abs(a[i][d] - b[i][d])));
  return m;
}

}  // namespace

// ---- config arithmetic -----------------------------------------------------

TEST(TokenizerConfig, PaperFrameRateIsExactlySevenAndAHalf) {
  const auto c = TokenizerConfig::paper_scale();
  EXPECT_EQ(c.hop(), 3200u);
  EXPECT_EQ(c.stage_channels.size(), 7u);
  EXPECT_EQ(c.downsample_factors.size(), 6u);
  EXPECT_EQ(c.frame_rate(), 7.5);
  EXPECT_EQ(c.frame_rate() * c.hop(), 24000.0);
}

TEST(TokenizerConfig, DeskFrameRateIsExactlyTwentyFive) {
  const auto c = TokenizerConfig::desk();
  EXPECT_EQ(c.hop(), 320u);
  EXPECT_EQ(c.frame_rate(), 25.0);
}

TEST(TokenizerConfig, ValidateRejectsBadGeometry) {
  auto c = TokenizerConfig::desk();
  c.stage_channels.pop_back();
  EXPECT_THROW(c.validate(), ConfigError);
  c = TokenizerConfig::desk();
  c.downsample_factors[1] = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TokenizerConfig::desk();
  c.sigma_scale = -1;
  EXPECT_THROW(c.validate(), ConfigError);
}

// ---- acoustic encode / decode ---------------------------------------------

TEST(AcousticEncode, OneSecondAtPaperScaleGivesEightFrames) {
  Rng rng(1);
  AcousticTokenizer<float> tok(slim_paper_config(), rng);
  const auto mu = tok.encode(random_audio(24000, 24000, 2));
  ASSERT_EQ(mu.size(), 8u);  // ceil(24000 / 3200)
  EXPECT_EQ(mu[0].size(), 4u);
}

TEST(AcousticEncode, EmptyAudioGivesNoFrames) {
  Rng rng(1);
  AcousticTokenizer<float> tok(TokenizerConfig::desk(), rng);
  EXPECT_TRUE(tok.encode(AudioBuffer{{}, 8000}).empty());
}

TEST(AcousticEncode, SampleRateMismatchIsConfigError) {
  Rng rng(1);
  AcousticTokenizer<float> tok(TokenizerConfig::desk(), rng);
  EXPECT_THROW(tok.encode(random_audio(100, 16000, 1)), ConfigError);
}

TEST(AcousticEncode, FrameCountIsCeilOfSamplesOverHop) {
  Rng rng(1);
  AcousticTokenizer<float> tok(TokenizerConfig::desk(), rng);
  for (std::size_t n : {1u, 319u, 320u, 321u, 999u})
    EXPECT_EQ(tok.encode(random_audio(n, 8000, n)).size(), (n + 319) / 320) << n;
}

TEST(AcousticEncode, StreamingOneFrameChunksMatchesOffline) {
  Rng rng(3);
  AcousticTokenizer<float> tok(TokenizerConfig::desk(), rng);
  const auto audio = random_audio(320 * 9 + 17, 8000, 4);
  const auto offline = tok.encode(audio);
  StreamingEncoder<float> enc(tok.encoder());
  FrameSequence streamed;
  for (std::size_t off = 0; off < audio.size(); off += 320) {
    const std::size_t n = std::min<std::size_t>(320, audio.size() - off);
    for (auto& f : enc.push(std::span<const float>(audio.samples.data() + off, n))) streamed.push_back(f);
  }
  for (auto& f : enc.flush()) streamed.push_back(f);
  EXPECT_LE(max_abs_diff(offline, streamed), 1e-5);
}

TEST(AcousticEncode, StreamingRandomChunkingsMatchOffline) {
  Rng rng(5);
  AcousticTokenizer<float> tok(TokenizerConfig::desk(), rng);
  const auto audio = random_audio(320 * 12, 8000, 6);
  const auto offline = tok.encode(audio);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng cr(100 + seed);
    StreamingEncoder<float> enc(tok.encoder());
    FrameSequence streamed;
    std::size_t off = 0;
    while (off < audio.size()) {
      const std::size_t n = std::min<std::size_t>(1 + cr.index(700), audio.size() - off);
      for (auto& f : enc.push(std::span<const float>(audio.samples.data() + off, n))) streamed.push_back(f);
      off += n;
    }
    for (auto& f : enc.flush()) streamed.push_back(f);
    EXPECT_LE(max_abs_diff(offline, streamed), 1e-5) << "chunking seed " << seed;
  }
}

TEST(AcousticEncode, PerturbationNeverReachesEarlierFrames) {
  Rng rng(7);
  AcousticTokenizer<float> tok(TokenizerConfig::desk(), rng);
  const auto audio = random_audio(320 * 6, 8000, 8);
  const auto base = tok.encode(audio);
  for (std::size_t t : {0u, 1u, 319u, 320u, 655u, 1279u, 1280u, 1919u}) {
    auto p = audio;
    p.samples[t] += 0.5f;
    const auto y = tok.encode(p);
    for (std::size_t f = 0; f < t / 320; ++f) EXPECT_EQ(y[f], base[f]) << "t=" << t << " frame " << f;
    EXPECT_NE(y[t / 320], base[t / 320]) << "frame containing t should react";
  }
}

TEST(AcousticDecode, EightFramesAtPaperScaleGive25600Samples) {
  Rng rng(1);
  const auto cfg = slim_paper_config();
  AcousticTokenizer<float> tok(cfg, rng);
  FrameSequence z(8, std::vector<float>(cfg.latent_dim, 0.1f));
  const auto y = tok.decode(z);
  EXPECT_EQ(y.size(), 25600u);
  EXPECT_EQ(y.sample_rate, 24000);
}

TEST(AcousticDecode, EmptyInputGivesEmptyAudio) {
  Rng rng(1);
  AcousticTokenizer<float> tok(TokenizerConfig::desk(), rng);
  EXPECT_TRUE(tok.decode({}).empty());
}

TEST(AcousticDecode, RandomWeightsGiveFiniteOutput) {
  Rng rng(9);
  AcousticTokenizer<float> tok(TokenizerConfig::desk(), rng);
  FrameSequence z;
  for (int i = 0; i < 6; ++i) z.push_back(rng.normal_vector<float>(16, 3.0));
  const auto y = tok.decode(z);
  EXPECT_EQ(y.size(), 6u * 320);
  EXPECT_TRUE(y.all_finite());
}

TEST(AcousticDecode, WrongLatentWidthIsShapeError) {
  Rng rng(1);
  AcousticTokenizer<float> tok(TokenizerConfig::desk(), rng);
  EXPECT_THROW(tok.decode(FrameSequence(2, std::vector<float>(3))), ShapeError);
}

TEST(AcousticDecode, StreamingFrameByFrameMatchesOffline) {
  Rng rng(10);
  AcousticTokenizer<float> tok(TokenizerConfig::desk(), rng);
  FrameSequence z;
  for (int i = 0; i < 7; ++i) z.push_back(rng.normal_vector<float>(16));
  const auto offline = tok.decode(z);
  StreamingDecoder<float> dec(tok.decoder());
  std::vector<float> streamed;
  for (const auto& f : z) {
    const auto part = dec.push({f});
    EXPECT_EQ(part.size(), 320u);
    streamed.insert(streamed.end(), part.begin(), part.end());
  }
  ASSERT_EQ(streamed.size(), offline.size());
  double m = 0;
  for (std::size_t i = 0; i < streamed.size(); ++i) m = std::max(m, double(std::abs(streamed[i] - offline.samples[i])));
  EXPECT_LE(m, 1e-5);
}

TEST(AcousticDecode, FrameOnlyAffectsItsOwnAndLaterSamples) {
  Rng rng(11);
  AcousticTokenizer<float> tok(TokenizerConfig::desk(), rng);
  FrameSequence z;
  for (int i = 0; i < 5; ++i) z.push_back(rng.normal_vector<float>(16));
  const auto base = tok.decode(z);
  auto p = z;
  p[3][0] += 1.0f;
  const auto y = tok.decode(p);
  for (std::size_t i = 0; i < 3 * 320; ++i) ASSERT_EQ(y.samples[i], base.samples[i]) << i;
}

// ---- sigma-VAE sampling ----------------------------------------------------

TEST(SampleLatent, ZeroEpsilonGivesMu) {
  NoiseDraw d{std::vector<float>(3, 0.0f), {0.5f, -0.2f, 0.1f}, 0};
  const std::vector<float> mu{1.0f, -2.0f, 3.5f};
  EXPECT_EQ(sample_latent(mu, d), mu);
}

TEST(SampleLatent, ZeroSigmaScaleGivesMu) {
  const std::vector<float> mu{1.0f, -2.0f, 3.5f, 0.25f};
  const auto d = NoiseDraw::generate(4, 0.0, 17);
  for (float s : d.sigma) EXPECT_EQ(s, 0.0f);
  EXPECT_EQ(sample_latent(mu, d), mu);
}

TEST(SampleLatent, DimensionMismatchIsShapeError) {
  EXPECT_THROW(sample_latent({1.0f, 2.0f}, NoiseDraw::generate(3, 0.01, 1)), ShapeError);
}

TEST(SampleLatent, DrawRegeneratesFromSeed) {
  const auto a = NoiseDraw::generate(16, 0.01, 1234);
  const auto b = NoiseDraw::generate(16, 0.01, 1234);
  EXPECT_EQ(a.epsilon, b.epsilon);
  EXPECT_EQ(a.sigma, b.sigma);
  const std::vector<float> mu(16, 0.7f);
  const auto z = sample_latent(mu, a);
  EXPECT_EQ(z, sample_latent(mu, b));
  for (std::size_t i = 0; i < 16; ++i) {
    const float noise = a.sigma[i] * a.epsilon[i];
    EXPECT_EQ(z[i], mu[i] + noise);  // bitwise in the form the sample is computed
    EXPECT_LE(std::abs((z[i] - mu[i]) - noise), std::nextafter(mu[i], 2.0f) - mu[i]);
  }
}

// Var(sigma * eps) = E[sigma^2] E[eps^2] = C_sigma for independent zero-mean draws.
TEST(SampleLatent, MonteCarloMeanAndVarianceLaw) {
  const double C = 0.01;
  const std::size_t D = 16, N = 100000;
  std::vector<float> mu(D);
  for (std::size_t d = 0; d < D; ++d) mu[d] = static_cast<float>(0.3 * d - 2.0);
  std::vector<double> sum(D, 0.0), sumsq(D, 0.0);
  for (std::size_t n = 0; n < N; ++n) {
    const auto z = sample_latent(mu, NoiseDraw::generate(D, C, 1000 + n));
    for (std::size_t d = 0; d < D; ++d) {
      sum[d] += z[d];
      sumsq[d] += (double(z[d]) - mu[d]) * (double(z[d]) - mu[d]);
    }
  }
  const double stderr_ = std::sqrt(C / N);
  for (std::size_t d = 0; d < D; ++d) {
    EXPECT_LE(std::abs(sum[d] / N - mu[d]), 4 * stderr_) << "dim " << d;
    EXPECT_NEAR(sumsq[d] / N, C, 0.05 * C) << "dim " << d;
  }
}

// ---- semantic tokenizer ----------------------------------------------------

TEST(SemanticEncode, DeterministicAcrossCalls) {
  Rng rng(12);
  SemanticTokenizer<float> sem(TokenizerConfig::desk(), rng);
  const auto audio = random_audio(2000, 8000, 13);
  const auto a = sem.encode(audio);
  const auto b = sem.encode(audio);
  ASSERT_EQ(a.size(), 7u);
  EXPECT_EQ(a, b);
}

TEST(SemanticEncode, FrameCountMatchesAcoustic) {
  Rng rng(14);
  AcousticTokenizer<float> ac(TokenizerConfig::desk(), rng);
  SemanticTokenizer<float> sem(TokenizerConfig::desk(), rng);
  Rng lengths(15);
  for (int i = 0; i < 10; ++i) {
    const std::size_t n = 1 + lengths.index(4000);
    const auto audio = random_audio(n, 8000, n);
    EXPECT_EQ(sem.encode(audio).size(), ac.encode(audio).size()) << n;
    EXPECT_EQ(sem.encode(audio)[0].size(), 16u);
  }
}

TEST(SemanticEncode, RateMismatchIsConfigError) {
  Rng rng(1);
  SemanticTokenizer<float> sem(TokenizerConfig::desk(), rng);
  EXPECT_THROW(sem.encode(random_audio(10, 24000, 1)), ConfigError);
}

// ---- ASR proxy -------------------------------------------------------------

TEST(AsrProxy, UniformLogitsGiveLogVocab) {
  Rng rng(16);
  AsrProxyDecoder<double> dec(4, {}, rng);
  // Zeroing the output layer makes every logit 0.
  for (auto& [name, t] : dec.parameters())
    if (name.rfind("asr.out", 0) == 0)
      for (auto& v : Tensor<double>(t).mutable_data()) v = 0;
  Tensor<double> semantic({4, 6}, rng.normal_vector<double>(24));
  const auto loss = asr_proxy_loss(dec, semantic, {1, 2, 3});
  EXPECT_NEAR(loss.item(), std::log(double(vocab::kSize)), 1e-12);
}

TEST(AsrProxy, RandomInitLossIsFinitePositiveAndNearLogVocab) {
  Rng rng(17);
  AsrProxyDecoder<float> dec(16, {}, rng);
  Tensor<float> semantic({16, 10}, rng.normal_vector<float>(160));
  const float loss = asr_proxy_loss(dec, semantic, {0, 5, 9, 15}).item();
  EXPECT_TRUE(std::isfinite(loss));
  EXPECT_GT(loss, 0.0f);
  EXPECT_NEAR(loss, std::log(24.0), 1.0);
}

TEST(AsrProxy, NonPhoneTokenIsDataError) {
  Rng rng(18);
  AsrProxyDecoder<float> dec(16, {}, rng);
  Tensor<float> semantic({16, 4}, rng.normal_vector<float>(64));
  EXPECT_THROW(asr_proxy_loss(dec, semantic, {1, vocab::kBos}), DataError);
  EXPECT_THROW(asr_proxy_loss(dec, semantic, {99}), DataError);
}

TEST(AsrProxy, GradientsReachSemanticEncoder) {
  Rng rng(19);
  SemanticTokenizer<float> sem(TokenizerConfig::desk(), rng);
  AsrProxyDecoder<float> dec(16, {}, rng);
  auto audio = AcousticTokenizer<float>::audio_tensor(random_audio(960, 8000, 20));
  auto params = sem.parameters();
  for (auto& [n, t] : params) t.zero_grad();
  backward(asr_proxy_loss(dec, sem.features(audio), {2, 7}));
  double norm = 0;
  for (auto& [n, t] : params)
    for (float g : t.grad()) norm += g * g;
  EXPECT_GT(norm, 0.0);
  for (const auto& [n, t] : dec.parameters()) EXPECT_EQ(n.rfind("asr.", 0), 0u) << n;
  for (const auto& [n, t] : sem.parameters()) EXPECT_EQ(n.rfind("semantic.", 0), 0u) << n;
}

TEST(AsrProxy, OverfitsSingleUtterance) {
  auto cfg = TokenizerConfig::desk();
  cfg.stage_channels = {4, 8, 16, 32, 32};
  Rng rng(21);
  SemanticTokenizer<float> sem(cfg, rng);
  AsrDecoderConfig dc;
  dc.dim = 32;
  dc.layers = 1;
  AsrProxyDecoder<float> dec(cfg.semantic_dim, dc, rng);
  auto params = sem.parameters();
  dec.collect(params);
  AdamW<float> opt(tensors_of(params), 0.0);
  const auto audio = AcousticTokenizer<float>::audio_tensor(random_audio(1600, 8000, 22));
  const std::vector<std::size_t> transcript{3, 11, 6, 0};
  float first = 0, last = 0;
  for (int step = 0; step < 120; ++step) {
    opt.zero_grad();
    auto loss = asr_proxy_loss(dec, sem.features(audio), transcript);
    backward(loss);
    opt.step(3e-3);
    (step == 0 ? first : last) = loss.item();
  }
  EXPECT_LT(last, 0.1f * first) << "first " << first << " last " << last;
}
