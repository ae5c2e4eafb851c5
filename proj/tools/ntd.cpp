// Command-line front end: corpus generation, tokenizer and TTS training,
// synthesis and evaluation. Exit codes: 0 ok, 1 contract/data error, 2 usage error.
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "ntd/io/corpus_files.hpp"
#include "ntd/io/metrics.hpp"
#include "ntd/pipeline/desk.hpp"

using namespace ntd;
namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string corpus_dir;
  std::string acoustic, semantic, tts;

  Config config() const { return config_path.empty() ? Config{} : Config::load(config_path); }

  std::string path_or(const Config& c, const std::string& flag, const std::string& key) const {
    if (!flag.empty()) return flag;
    const auto v = c.get_string(key, "");
    if (v.empty()) throw ContractError("no " + key + " given (flag or config key)");
    return v;
  }

  Corpus corpus(const Config& c, const DeskConfig& d) const {
    const auto dir = corpus_dir.empty() ? c.get_string("corpus.dir", "") : corpus_dir;
    if (!dir.empty()) return read_corpus(dir);
    return generate_corpus(default_speakers(), d.corpus_size, d.corpus_seed, d.corpus);
  }
};

void add_common(CLI::App* app, Common& o, bool out_required) {
  app->add_option("--config", o.config_path, "key = value configuration file")->check(CLI::ExistingFile);
  app->add_option("--seed", o.seed, "random seed");
  auto* out = app->add_option("--out", o.out, "output path");
  if (out_required) out->required();
}

void add_checkpoints(CLI::App* app, Common& o, bool with_tts) {
  app->add_option("--acoustic", o.acoustic, "acoustic tokenizer checkpoint");
  app->add_option("--semantic", o.semantic, "semantic tokenizer checkpoint");
  if (with_tts) app->add_option("--tts", o.tts, "TTS checkpoint");
}

void write_json(const std::string& path, const nlohmann::json& j) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write " + path);
  f << j.dump(2) << '\n';
}

int corpus_gen(const Common& o, std::size_t size) {
  const auto c = o.config();
  auto d = DeskConfig::from(c);
  if (o.seed) d.corpus_seed = *o.seed;
  if (size) d.corpus_size = size;
  const auto corpus = generate_corpus(default_speakers(), d.corpus_size, d.corpus_seed, d.corpus);
  write_corpus(corpus, o.out);
  std::printf("wrote %zu train + %zu held-out utterances to %s\n", corpus.train.size(), corpus.heldout.size(),
              o.out.c_str());
  return 0;
}

int tokenizer_train(const Common& o) {
  const auto c = o.config();
  auto d = DeskConfig::from(c);
  if (o.seed) {
    d.acoustic.seed = *o.seed;
    d.semantic.seed = *o.seed + 1;
    d.init_seed = *o.seed + 2;
  }
  const auto corpus = o.corpus(c, d);
  fs::create_directories(o.out);
  TrainLog log((fs::path(o.out) / "train_log.jsonl").string());
  Rng rng(d.init_seed);
  AcousticTokenizer<float> acoustic(d.tokenizer, rng);
  SemanticTokenizer<float> semantic(d.tokenizer, rng);
  const auto r = pretrain_tokenizers(corpus, d, acoustic, semantic, &log);
  to_checkpoint(acoustic).save((fs::path(o.out) / "acoustic.ckpt").string());
  to_checkpoint(semantic).save((fs::path(o.out) / "semantic.ckpt").string());
  write_json((fs::path(o.out) / "tokenizer_summary.json").string(),
             {{"heldout_snr_db", r.heldout_snr_db}, {"probe_accuracy", r.probe_accuracy},
              {"acoustic_seconds", r.acoustic_seconds}, {"semantic_seconds", r.semantic_seconds},
              {"frame_rate_hz", d.tokenizer.frame_rate()}});
  std::printf("held-out SNR %.2f dB, semantic probe accuracy %.3f\n", r.heldout_snr_db, r.probe_accuracy);
  return 0;
}

int tokenizer_eval(const Common& o) {
  const auto c = o.config();
  const auto tok = read_tokenizer_config(c);
  std::printf("frame_rate_hz = %g\n", tok.frame_rate());
  std::printf("hop_samples = %zu\n", tok.hop());
  // Metrics only for checkpoints named on the command line.
  const auto& ap = o.acoustic;
  const auto& sp = o.semantic;
  if (ap.empty() && sp.empty()) return 0;
  const auto d = DeskConfig::from(c);
  const auto corpus = o.corpus(c, d);
  if (!ap.empty()) {
    const auto a = acoustic_from_checkpoint(Checkpoint::load(ap));
    std::printf("heldout_snr_db = %.3f\n", reconstruction_snr(a, corpus.heldout));
  }
  if (!sp.empty()) {
    const auto s = semantic_from_checkpoint(Checkpoint::load(sp));
    const std::vector<Utterance> train(corpus.train.begin(),
                                       corpus.train.begin() + std::min<std::ptrdiff_t>(d.probe_train_utterances,
                                                                                       corpus.train.size()));
    std::printf("probe_accuracy = %.4f\n", semantic_probe_accuracy(s, train, corpus.heldout, d.corpus.phone_samples()));
  }
  return 0;
}

int tts_train(const Common& o) {
  const auto c = o.config();
  auto d = DeskConfig::from(c);
  if (o.seed) {
    d.tts.seed = *o.seed;
    d.init_seed = *o.seed + 1;
  }
  const auto acoustic = acoustic_from_checkpoint(Checkpoint::load(o.path_or(c, o.acoustic, "checkpoints.acoustic")));
  const auto semantic = semantic_from_checkpoint(Checkpoint::load(o.path_or(c, o.semantic, "checkpoints.semantic")));
  const auto corpus = o.corpus(c, d);
  fs::create_directories(o.out);
  TrainLog log((fs::path(o.out) / "train_log.jsonl").string());
  const auto t0 = std::chrono::steady_clock::now();
  const auto prepared = prepare_tts_corpus(corpus.train, acoustic, semantic);
  Rng rng(d.init_seed);
  TtsModel<float> model(TtsModelConfig::desk(acoustic.config()), rng);
  const auto r = train_tts(model, prepared, acoustic, semantic, d.tts, &log);
  model.to_checkpoint().save((fs::path(o.out) / "tts.ckpt").string());
  const auto [first, last] = smoothed_ends(r.diffusion_losses);
  nlohmann::json stages = nlohmann::json::array();
  for (const auto& t : r.transitions) stages.push_back({{"step", t.step}, {"stage", t.stage}, {"max_len", t.max_len}});
  write_json((fs::path(o.out) / "tts_summary.json").string(),
             {{"smoothed_loss_first", first}, {"smoothed_loss_last", last}, {"stages", stages},
              {"truncated_examples", r.truncated_examples}, {"seconds", seconds_since(t0)}});
  std::printf("smoothed diffusion loss %.4f -> %.4f\n", first, last);
  return 0;
}

int synth(const Common& o, const std::string& script_path, const std::vector<std::string>& prompt_flags) {
  const auto c = o.config();
  auto d = DeskConfig::from(c);
  if (o.seed) d.synthesis.seed = *o.seed;
  const auto acoustic = acoustic_from_checkpoint(Checkpoint::load(o.path_or(c, o.acoustic, "checkpoints.acoustic")));
  const auto semantic = semantic_from_checkpoint(Checkpoint::load(o.path_or(c, o.semantic, "checkpoints.semantic")));
  const auto model = TtsModel<float>::from_checkpoint(Checkpoint::load(o.path_or(c, o.tts, "checkpoints.tts")));
  const auto script = load_script(script_path);
  std::map<std::size_t, std::string> wavs;
  for (std::size_t k = 1; k <= vocab::kMaxSpeakers; ++k) {
    const auto p = c.get_string("synth.prompt." + std::to_string(k), "");
    if (!p.empty()) wavs[k] = p;
  }
  for (const auto& f : prompt_flags) {
    const auto eq = f.find('=');
    if (eq == std::string::npos) throw ContractError("--prompt expects K=path.wav, got '" + f + "'");
    wavs[std::stoul(f.substr(0, eq))] = f.substr(eq + 1);
  }
  const std::size_t prompt_frames = c.get_size("synth.prompt_frames", d.tts.examples.prompt_frames);
  std::vector<VoicePrompt> prompts;
  for (const auto& [k, path] : wavs) {
    const bool used = std::any_of(script.begin(), script.end(), [&](const ScriptTurn& t) { return t.speaker_id == k; });
    if (!used) continue;
    const auto mu = acoustic.encode(wav_read(path));
    VoicePrompt p;
    p.speaker_id = k;
    p.latents.assign(mu.begin(), mu.begin() + std::min<std::ptrdiff_t>(prompt_frames, mu.size()));
    prompts.push_back(std::move(p));
  }
  const auto r = synthesize(model, acoustic, semantic, prompts, script, d.synthesis);
  wav_write(r.audio, o.out);
  std::size_t tokens = 0;
  for (const auto& t : script) tokens += t.text_tokens.size();
  std::printf("%zu frames (%.2f s), speech/text ratio %.2f%s -> %s\n", r.frames(), r.audio.duration_seconds(),
              double(r.frames()) / double(tokens), r.truncated ? ", truncated at max_frames" : "", o.out.c_str());
  return 0;
}

int eval(const Common& o, const std::string& ref, const std::string& cand) {
  if (!ref.empty() || !cand.empty()) {
    if (ref.empty() || cand.empty()) throw ContractError("eval needs both --reference and --candidate");
    const auto m = eval_metrics(wav_read(ref), wav_read(cand));
    std::printf("snr_db = %.4f\nsi_snr_db = %.4f\n", m.snr_db, m.si_snr_db);
    return 0;
  }
  const auto c = o.config();
  const auto d = DeskConfig::from(c);
  const auto acoustic = acoustic_from_checkpoint(Checkpoint::load(o.path_or(c, o.acoustic, "checkpoints.acoustic")));
  const auto semantic = semantic_from_checkpoint(Checkpoint::load(o.path_or(c, o.semantic, "checkpoints.semantic")));
  const auto model = TtsModel<float>::from_checkpoint(Checkpoint::load(o.path_or(c, o.tts, "checkpoints.tts")));
  const auto corpus = o.corpus(c, d);
  const auto e = evaluate_speakers(model, acoustic, semantic, corpus, d, d.tts.examples.prompt_frames);
  const nlohmann::json j{{"turns", e.turns},
                         {"speaker_match_rate", e.match_rate},
                         {"mean_duration_ratio", e.mean_duration_ratio},
                         {"duration_within_50pct", e.within_half_fraction},
                         {"speech_text_ratio", e.speech_text_ratio},
                         {"truncated", e.truncated}};
  std::printf("%s\n", j.dump(2).c_str());
  if (!o.out.empty()) write_json(o.out, j);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"next-token diffusion TTS (desk scale)"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);
  Common o;
  std::size_t size = 0;
  std::string script_path, ref, cand;
  std::vector<std::string> prompt_flags;

  auto* corpus = app.add_subcommand("corpus", "synthetic corpus")->require_subcommand(1);
  auto* corpus_gen_cmd = corpus->add_subcommand("gen", "generate the multi-speaker corpus");
  add_common(corpus_gen_cmd, o, true);
  corpus_gen_cmd->add_option("--size", size, "number of utterances");

  auto* tok = app.add_subcommand("tokenizer", "acoustic and semantic tokenizers")->require_subcommand(1);
  auto* tok_train = tok->add_subcommand("train", "pretrain both tokenizers");
  add_common(tok_train, o, true);
  tok_train->add_option("--corpus", o.corpus_dir, "corpus directory (default: generate from config)");
  auto* tok_eval = tok->add_subcommand("eval", "frame rate and reconstruction/probe metrics");
  add_common(tok_eval, o, false);
  add_checkpoints(tok_eval, o, false);
  tok_eval->add_option("--corpus", o.corpus_dir, "corpus directory");

  auto* tts = app.add_subcommand("tts", "sequence model and diffusion head")->require_subcommand(1);
  auto* tts_train_cmd = tts->add_subcommand("train", "train with frozen tokenizers");
  add_common(tts_train_cmd, o, true);
  add_checkpoints(tts_train_cmd, o, false);
  tts_train_cmd->add_option("--corpus", o.corpus_dir, "corpus directory");

  auto* synth_cmd = app.add_subcommand("synth", "synthesize a script");
  add_common(synth_cmd, o, true);
  add_checkpoints(synth_cmd, o, true);
  synth_cmd->add_option("--script", script_path, "script file (SpeakerK: p1 p2 ...)")->required();
  synth_cmd->add_option("--prompt", prompt_flags, "voice prompt K=path.wav (repeatable)");

  auto* eval_cmd = app.add_subcommand("eval", "audio metrics or speaker-match evaluation");
  add_common(eval_cmd, o, false);
  add_checkpoints(eval_cmd, o, true);
  eval_cmd->add_option("--reference", ref, "reference WAV");
  eval_cmd->add_option("--candidate", cand, "candidate WAV");
  eval_cmd->add_option("--corpus", o.corpus_dir, "corpus directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (corpus_gen_cmd->parsed()) return corpus_gen(o, size);
    if (tok_train->parsed()) return tokenizer_train(o);
    if (tok_eval->parsed()) return tokenizer_eval(o);
    if (tts_train_cmd->parsed()) return tts_train(o);
    if (synth_cmd->parsed()) return synth(o, script_path, prompt_flags);
    if (eval_cmd->parsed()) return eval(o, ref, cand);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}
