#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <regex>

#include <gtest/gtest.h>

#include "ntd/io/corpus_files.hpp"
#include "ntd/io/wav.hpp"
#include "ntd/pipeline/persist.hpp"
#include "ntd/pipeline/tts.hpp"

using namespace ntd;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string output;
};

Run run(const std::string& args) {
  const std::string cmd = std::string(NTD_CLI_PATH) + " " + args + " 2>&1";
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) throw std::runtime_error("popen failed");
  std::string out;
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof buf, p)) out.append(buf, n);
  const int status = pclose(p);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

void write_text(const fs::path& p, const std::string& s) { std::ofstream(p) << s; }

// Untrained but well-formed checkpoints, a prompt WAV and a config pointing at them.
class CliFixture : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir = fs::temp_directory_path() / "ntd_cli_test";
    fs::remove_all(dir);
    fs::create_directories(dir);
    Rng rng(3);
    const auto tok = TokenizerConfig::desk();
    AcousticTokenizer<float> ac(tok, rng);
    SemanticTokenizer<float> se(tok, rng);
    auto mcfg = TtsModelConfig::desk(tok);
    mcfg.seq.model_dim = 32;
    mcfg.seq.layers = 1;
    mcfg.head.cond_dim = 32;
    mcfg.head.width = 32;
    TtsModel<float> model(mcfg, rng);
    to_checkpoint(ac).save((dir / "acoustic.ckpt").string());
    to_checkpoint(se).save((dir / "semantic.ckpt").string());
    model.to_checkpoint().save((dir / "tts.ckpt").string());
    const auto corpus = generate_corpus(default_speakers(), 4, 5);
    wav_write(corpus.train[0].audio, (dir / "prompt.wav").string());
    write_text(dir / "script.txt", "Speaker1: p1 p2 p3\n");
    write_text(dir / "run.conf", "checkpoints.acoustic = " + (dir / "acoustic.ckpt").string() +
                                     "\ncheckpoints.semantic = " + (dir / "semantic.ckpt").string() +
                                     "\ncheckpoints.tts = " + (dir / "tts.ckpt").string() +
                                     "\nsynth.prompt.1 = " + (dir / "prompt.wav").string() +
                                     "\nsynth.max_frames = 6\nsynth.steps = 2\n");
  }
  static void TearDownTestSuite() { fs::remove_all(dir); }
  static fs::path dir;
};
fs::path CliFixture::dir;

std::string configs() { return NTD_CONFIG_DIR; }

}  // namespace

TEST(Cli, PaperConfigFrameRate) {
  const auto r = run("tokenizer eval --config " + configs() + "/paper.conf");
  EXPECT_EQ(r.code, 0) << r.output;
  EXPECT_NE(r.output.find("frame_rate_hz = 7.5\n"), std::string::npos) << r.output;
}

TEST(Cli, DeskConfigFrameRate) {
  const auto r = run("tokenizer eval --config " + configs() + "/desk.conf");
  EXPECT_EQ(r.code, 0) << r.output;
  EXPECT_NE(r.output.find("frame_rate_hz = 25\n"), std::string::npos) << r.output;
}

TEST(Cli, UnknownFlagPrintsHelpAndExits2) {
  const auto r = run("tokenizer eval --bogus 1");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("--bogus"), std::string::npos) << r.output;
  EXPECT_NE(r.output.find("Usage"), std::string::npos) << r.output;
}

TEST(Cli, MissingSubcommandIsUsageError) {
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("tts").code, 2);
}

TEST(Cli, HelpExitsZero) { EXPECT_EQ(run("--help").code, 0); }

TEST(Cli, MissingConfigFileIsUsageError) { EXPECT_EQ(run("tokenizer eval --config /nonexistent.conf").code, 2); }

TEST_F(CliFixture, MissingCheckpointNamesThePath) {
  const auto missing = (dir / "no_such_tts.ckpt").string();
  const auto r = run("synth --config " + (dir / "run.conf").string() + " --script " + (dir / "script.txt").string() +
                     " --tts " + missing + " --out " + (dir / "x.wav").string());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find(missing), std::string::npos) << r.output;
  EXPECT_FALSE(fs::exists(dir / "x.wav"));
}

TEST_F(CliFixture, WrongCheckpointKindIsDataError) {
  const auto r = run("synth --config " + (dir / "run.conf").string() + " --script " + (dir / "script.txt").string() +
                     " --tts " + (dir / "acoustic.ckpt").string() + " --out " + (dir / "x.wav").string());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("tts"), std::string::npos) << r.output;
}

TEST_F(CliFixture, BadScriptIsDataError) {
  write_text(dir / "bad.txt", "Speaker1: p1 zz\n");
  const auto r = run("synth --config " + (dir / "run.conf").string() + " --script " + (dir / "bad.txt").string() +
                     " --out " + (dir / "x.wav").string());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("zz"), std::string::npos) << r.output;
}

TEST_F(CliFixture, SynthWritesFramesTimesHop) {
  const auto out = dir / "out.wav";
  const auto r = run("synth --config " + (dir / "run.conf").string() + " --script " + (dir / "script.txt").string() +
                     " --out " + out.string() + " --seed 4");
  ASSERT_EQ(r.code, 0) << r.output;
  std::smatch m;
  ASSERT_TRUE(std::regex_search(r.output, m, std::regex("(\\d+) frames"))) << r.output;
  const std::size_t frames = std::stoul(m[1]);
  EXPECT_GE(frames, 1u);
  EXPECT_LE(frames, 6u);
  const auto audio = wav_read(out.string());
  EXPECT_EQ(audio.sample_rate, 8000);
  EXPECT_EQ(audio.samples.size(), frames * TokenizerConfig::desk().hop());

  // Same seed, same file.
  const auto again = dir / "again.wav";
  ASSERT_EQ(run("synth --config " + (dir / "run.conf").string() + " --script " + (dir / "script.txt").string() +
                " --out " + again.string() + " --seed 4")
                .code,
            0);
  EXPECT_EQ(wav_read(again.string()).samples, audio.samples);

  const auto e = run("eval --reference " + out.string() + " --candidate " + again.string());
  EXPECT_EQ(e.code, 0) << e.output;
  EXPECT_NE(e.output.find("si_snr_db"), std::string::npos);
}

TEST_F(CliFixture, CorpusGenWritesReadableCorpus) {
  const auto out = dir / "corpus";
  const auto r = run("corpus gen --size 12 --seed 9 --out " + out.string());
  ASSERT_EQ(r.code, 0) << r.output;
  const auto back = read_corpus(out.string());
  const auto ref = generate_corpus(default_speakers(), 12, 9);
  ASSERT_EQ(back.train.size(), ref.train.size());
  ASSERT_EQ(back.heldout.size(), ref.heldout.size());
  for (std::size_t i = 0; i < ref.train.size(); ++i) {
    EXPECT_EQ(back.train[i].phones, ref.train[i].phones);
    EXPECT_EQ(back.train[i].speaker_id, ref.train[i].speaker_id);
    ASSERT_EQ(back.train[i].audio.samples.size(), ref.train[i].audio.samples.size());
    for (std::size_t k = 0; k < ref.train[i].audio.samples.size(); ++k)
      ASSERT_LE(std::abs(back.train[i].audio.samples[k] - ref.train[i].audio.samples[k]), 1.0f / 32767);
  }
}
