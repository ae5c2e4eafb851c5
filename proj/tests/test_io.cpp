#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "ntd/io/checkpoint.hpp"
#include "ntd/io/config.hpp"
#include "ntd/io/corpus.hpp"
#include "ntd/io/metrics.hpp"
#include "ntd/io/script.hpp"
#include "ntd/io/wav.hpp"

using namespace ntd;
namespace fs = std::filesystem;

namespace {

std::string temp_path(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "ntd_tests";
  fs::create_directories(dir);
  return (dir / name).string();
}

AudioBuffer make_audio(std::vector<float> s, int rate = 8000) { return AudioBuffer{std::move(s), rate}; }

}  // namespace

// ---- wav -------------------------------------------------------------------

TEST(Wav, SilenceRoundTrip) {
  const auto path = temp_path("silence.wav");
  wav_write(make_audio(std::vector<float>(8000, 0.0f)), path);
  const auto back = wav_read(path);
  EXPECT_EQ(back.sample_rate, 8000);
  ASSERT_EQ(back.size(), 8000u);
  for (float s : back.samples) EXPECT_EQ(s, 0.0f);
}

TEST(Wav, FullScaleImpulseWithinOneStep) {
  const auto path = temp_path("impulse.wav");
  std::vector<float> s(100, 0.0f);
  s[10] = 1.0f;
  s[20] = -1.0f;
  wav_write(make_audio(s), path);
  const auto back = wav_read(path);
  EXPECT_NEAR(back.samples[10], 1.0f, 1.0 / 32768);
  EXPECT_NEAR(back.samples[20], -1.0f, 1.0 / 32768);
}

TEST(Wav, RandomRoundTripQuantizationBound) {
  const auto path = temp_path("random.wav");
  double worst = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    Rng rng(seed);
    std::vector<float> s(257);
    for (auto& v : s) v = static_cast<float>(2 * rng.uniform() - 1);
    wav_write(make_audio(s, 24000), path);
    const auto back = wav_read(path);
    ASSERT_EQ(back.size(), s.size());
    ASSERT_EQ(back.sample_rate, 24000);
    for (std::size_t i = 0; i < s.size(); ++i) worst = std::max(worst, double(std::abs(back.samples[i] - s[i])));
  }
  EXPECT_LE(worst, 1.0 / 32768);
}

TEST(Wav, OutOfRangeSamplesAreClamped) {
  const auto path = temp_path("clamp.wav");
  wav_write(make_audio({2.0f, -3.0f}), path);
  const auto back = wav_read(path);
  EXPECT_FLOAT_EQ(back.samples[0], 1.0f);
  EXPECT_FLOAT_EQ(back.samples[1], -1.0f);
}

TEST(Wav, MalformedHeaderIsFormatErrorWithOffset) {
  const auto path = temp_path("bad.wav");
  {
    std::ofstream f(path, std::ios::binary);
    f << "RIFX0000WAVE";
  }
  try {
    wav_read(path);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("offset 0"), std::string::npos);
  }
}

TEST(Wav, NonPcmEncodingRejected) {
  const auto path = temp_path("float.wav");
  wav_write(make_audio({0.1f, 0.2f}), path);
  std::string bytes;
  {
    std::ifstream f(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(f), {});
  }
  bytes[20] = 3;  // IEEE float format code
  {
    std::ofstream f(path, std::ios::binary);
    f << bytes;
  }
  try {
    wav_read(path);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("offset 20"), std::string::npos) << e.what();
  }
}

TEST(Wav, MissingFileIsDataError) { EXPECT_THROW(wav_read(temp_path("does_not_exist.wav")), DataError); }

// ---- checkpoint ------------------------------------------------------------

TEST(Checkpoint, BitwiseRoundTrip) {
  Rng rng(3);
  ParamList<float> params;
  params.emplace_back("a.weight", param_normal<float>({3, 4}, rng, 1.0));
  params.emplace_back("a.bias", param_normal<float>({4}, rng, 1.0));
  params.emplace_back("b", param_const<float>({2, 1, 2}, -0.0f));
  params[0].second.mutable_data()[5] = std::numeric_limits<float>::denorm_min();
  Checkpoint c;
  c.config = "model.width = 4\n";
  c.add(params);
  const auto path = temp_path("round.ckpt");
  c.save(path);
  const auto back = Checkpoint::load(path);
  EXPECT_EQ(back.config, c.config);
  ASSERT_EQ(back.tensors.size(), 3u);

  ParamList<float> fresh;
  fresh.emplace_back("a.weight", param_const<float>({3, 4}, 0.0f));
  fresh.emplace_back("a.bias", param_const<float>({4}, 0.0f));
  fresh.emplace_back("b", param_const<float>({2, 1, 2}, 1.0f));
  back.restore(fresh);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& x = params[i].second.values();
    const auto& y = fresh[i].second.values();
    ASSERT_EQ(x.size(), y.size());
    EXPECT_EQ(std::memcmp(x.data(), y.data(), x.size() * sizeof(float)), 0) << params[i].first;
  }
}

TEST(Checkpoint, EveryCorruptedByteIsRejected) {
  Checkpoint c;
  c.config = "k = v\n";
  c.tensors.push_back({"w", {2, 2}, {1, 2, 3, 4}});
  const auto bytes = c.serialize();
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    auto bad = bytes;
    bad[i] = static_cast<char>(bad[i] ^ 0x20);
    EXPECT_THROW(Checkpoint::deserialize(bad), FormatError) << "byte " << i;
  }
}

TEST(Checkpoint, TruncatedFileRejected) {
  Checkpoint c;
  c.tensors.push_back({"w", {3}, {1, 2, 3}});
  const auto bytes = c.serialize();
  EXPECT_THROW(Checkpoint::deserialize(bytes.substr(0, bytes.size() - 5)), FormatError);
  EXPECT_THROW(Checkpoint::deserialize(""), FormatError);
}

TEST(Checkpoint, LayoutIsLittleEndian) {
  Checkpoint c;
  c.tensors.push_back({"x", {1}, {1.0f}});
  const auto b = c.serialize();
  EXPECT_EQ(b.substr(0, 7), "NTDCKPT");
  EXPECT_EQ(static_cast<unsigned char>(b[8]), 1);  // version 1, low byte first
  // 1.0f = 0x3f800000 stored as 00 00 80 3f just before the checksum.
  const auto f = b.substr(b.size() - 8, 4);
  EXPECT_EQ(f, std::string("\x00\x00\x80\x3f", 4));
}

TEST(Checkpoint, RestoreChecksNamesAndShapes) {
  Checkpoint c;
  c.tensors.push_back({"w", {2, 2}, {1, 2, 3, 4}});
  ParamList<float> wrong_shape{{"w", param_const<float>({4}, 0.0f)}};
  EXPECT_THROW(c.restore(wrong_shape), ShapeError);
  ParamList<float> missing{{"v", param_const<float>({2, 2}, 0.0f)}};
  EXPECT_THROW(c.restore(missing), FormatError);
}

TEST(Checkpoint, MissingPathIsDataErrorNamingPath) {
  const auto path = temp_path("nope.ckpt");
  try {
    Checkpoint::load(path);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find(path), std::string::npos);
  }
}

// ---- corpus ----------------------------------------------------------------

TEST(Corpus, SameSeedIsBitIdentical) {
  const auto a = generate_corpus(default_speakers(), 12, 7);
  const auto b = generate_corpus(default_speakers(), 12, 7);
  ASSERT_EQ(a.train.size(), b.train.size());
  for (std::size_t i = 0; i < a.train.size(); ++i) {
    EXPECT_EQ(a.train[i].phones, b.train[i].phones);
    EXPECT_EQ(a.train[i].speaker_id, b.train[i].speaker_id);
    EXPECT_EQ(a.train[i].audio.samples, b.train[i].audio.samples);
  }
  const auto c = generate_corpus(default_speakers(), 12, 8);
  EXPECT_NE(a.train[0].audio.samples, c.train[0].audio.samples);
}

TEST(Corpus, PhoneDurationArithmetic) {
  const auto c = generate_corpus(default_speakers(), 30, 1);
  for (const auto* split : {&c.train, &c.heldout})
    for (const auto& u : *split) {
      EXPECT_EQ(u.audio.size(), 1600 * u.phones.size());
      EXPECT_EQ(u.audio.sample_rate, 8000);
      EXPECT_GE(u.phones.size(), 3u);
      EXPECT_LE(u.phones.size(), 6u);
      for (auto p : u.phones) EXPECT_TRUE(vocab::is_phone(p));
      EXPECT_TRUE(u.audio.all_finite());
    }
}

TEST(Corpus, SplitIsNinetyTenAndDisjoint) {
  const auto c = generate_corpus(default_speakers(), 100, 2);
  EXPECT_EQ(c.train.size(), 90u);
  EXPECT_EQ(c.heldout.size(), 10u);
  std::set<std::size_t> seen;
  for (const auto& u : c.train) seen.insert(u.index);
  for (const auto& u : c.heldout) EXPECT_FALSE(seen.count(u.index));
}

TEST(Corpus, UtteranceDependsOnlyOnSeedAndIndex) {
  const auto small = generate_corpus(default_speakers(), 5, 4);
  const auto big = generate_corpus(default_speakers(), 50, 4);
  for (std::size_t i = 0; i < small.train.size(); ++i) EXPECT_EQ(small.train[i].audio.samples, big.train[i].audio.samples);
}

TEST(Corpus, DefaultSpeakersDifferInF0ByTwentyPercent) {
  const auto s = default_speakers();
  ASSERT_EQ(s.size(), 4u);
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = i + 1; j < s.size(); ++j) {
      const double lo = std::min(s[i].f0, s[j].f0), hi = std::max(s[i].f0, s[j].f0);
      EXPECT_GE(hi / lo, 1.2);
    }
}

TEST(Corpus, RejectsSingleSpeakerAndEmpty) {
  EXPECT_THROW(generate_corpus({default_speakers()[0]}, 4, 1), ContractError);
  EXPECT_THROW(generate_corpus(default_speakers(), 0, 1), ContractError);
}

// ---- metrics ---------------------------------------------------------------

TEST(Metrics, IdenticalSignalsAreCapped) {
  const auto r = make_audio({0.1f, -0.4f, 0.3f, 0.2f});
  const auto m = eval_metrics(r, r);
  EXPECT_EQ(m.snr_db, 99.0);
  EXPECT_EQ(m.si_snr_db, 99.0);
}

TEST(Metrics, ZeroCandidateIsZeroDb) {
  const auto r = make_audio({0.1f, -0.4f, 0.3f, 0.2f});
  EXPECT_NEAR(eval_metrics(r, make_audio({0, 0, 0, 0})).snr_db, 0.0, 1e-12);
}

TEST(Metrics, HalfScaleClosedForm) {
  const auto r = make_audio({0.5f, -0.25f, 0.75f, 0.125f});
  const auto c = make_audio({0.25f, -0.125f, 0.375f, 0.0625f});
  const auto m = eval_metrics(r, c);
  EXPECT_NEAR(m.snr_db, 10 * std::log10(4.0), 1e-9);  // 6.0206 dB
  EXPECT_EQ(m.si_snr_db, 99.0);
}

TEST(Metrics, TrimsToShorterAndRejectsSilentReference) {
  const auto r = make_audio({0.5f, 0.5f, 0.9f});
  EXPECT_EQ(eval_metrics(r, make_audio({0.5f, 0.5f})).snr_db, 99.0);
  EXPECT_THROW(eval_metrics(make_audio({0, 0}), make_audio({1, 1})), DataError);
}

// ---- config / script -------------------------------------------------------

TEST(Config, ParsesDottedKeysAndLists) {
  const auto c = Config::parse(
      "# desk run\n"
      "tokenizer.downsample_factors = [4,4,4,5]\n"
      "tokenizer.sigma_scale = 0.01   # C_sigma\n"
      "train.steps = 100\n"
      "name = desk\n");
  EXPECT_EQ(c.get_sizes("tokenizer.downsample_factors", {}), (std::vector<std::size_t>{4, 4, 4, 5}));
  EXPECT_DOUBLE_EQ(c.get_double("tokenizer.sigma_scale", 0), 0.01);
  EXPECT_EQ(c.get_int("train.steps", 0), 100);
  EXPECT_EQ(c.get_string("name", ""), "desk");
  EXPECT_EQ(c.get_int("missing", 42), 42);
  EXPECT_EQ(c.subtree("tokenizer").get_double("sigma_scale", 0), 0.01);
  const auto again = Config::parse(c.to_string());
  EXPECT_EQ(again.values(), c.values());
}

TEST(Config, Errors) {
  EXPECT_THROW(Config::parse("just words\n"), FormatError);
  EXPECT_THROW(Config::parse("a = x\n").get_int("a", 0), ConfigError);
  EXPECT_THROW(Config::parse("a = 3\n").get_sizes("a", {}), ConfigError);
  EXPECT_THROW(Config().require_string("x"), ConfigError);
}

TEST(Script, ParsesTurns) {
  const auto turns = parse_script("Speaker1: p0 p5 p15\n\n# comment\nSpeaker2: 3 p4\n");
  ASSERT_EQ(turns.size(), 2u);
  EXPECT_EQ(turns[0].speaker_id, 1u);
  EXPECT_EQ(turns[0].text_tokens, (std::vector<std::size_t>{0, 5, 15}));
  EXPECT_EQ(turns[1].speaker_id, 2u);
  EXPECT_EQ(turns[1].text_tokens, (std::vector<std::size_t>{3, 4}));
  EXPECT_EQ(parse_script(format_script(turns)).size(), 2u);
}

TEST(Script, Errors) {
  EXPECT_THROW(parse_script("Speaker1: p16\n"), DataError);
  EXPECT_THROW(parse_script("Narrator: p1\n"), FormatError);
  EXPECT_THROW(parse_script("Speaker1:\n"), FormatError);
  EXPECT_THROW(parse_script("Speaker5: p1\n"), ConfigError);
  EXPECT_THROW(parse_script("Speaker1 p1\n"), FormatError);
}
