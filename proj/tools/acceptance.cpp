// Acceptance run: one PASS/FAIL line per criterion. Criteria 6-9 share one desk-scale
// training run (corpus -> tokenizers -> TTS -> synthesis), which takes several minutes.
#include <cstdio>
#include <filesystem>
#include <functional>

#include <CLI11.hpp>

#include "gradcheck.hpp"
#include "ntd/diffusion/sampler.hpp"
#include "ntd/io/wav.hpp"
#include "ntd/pipeline/desk.hpp"

using namespace ntd;
using ntd::testing::grad_check;
using ntd::testing::project;
using ntd::testing::randn;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) pass = false;
    if (!detail.empty()) detail += "; ";
    detail += (ok ? "" : "FAILED ") + what;
  }
};

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

int failures = 0;

void report(int n, const char* name, const std::function<Verdict()>& check) {
  Verdict v;
  try {
    v = check();
  } catch (const std::exception& e) {
    v.pass = false;
    v.detail = std::string("exception: ") + e.what();
  }
  if (!v.pass) ++failures;
  std::printf("criterion %d: %s - %s (%s)\n", n, v.pass ? "PASS" : "FAIL", name, v.detail.c_str());
  std::fflush(stdout);
}

AudioBuffer noise_audio(std::size_t n, int rate, std::uint64_t seed) {
  Rng rng(seed);
  AudioBuffer a;
  a.sample_rate = rate;
  for (std::size_t i = 0; i < n; ++i) a.samples.push_back(static_cast<float>(0.3 * rng.normal()));
  return a;
}

double max_diff(const FrameSequence& a, const FrameSequence& b) {
  if (a.size() != b.size()) return INFINITY;
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t d = 0; d < a[i].size(); ++d) m = std::max(m, double(std::abs(a[i][d] - b[i][d])));
  return m;
}

// ---- 1 ---------------------------------------------------------------------

Verdict frame_rates() {
  Verdict v;
  const auto paper = TokenizerConfig::paper_scale(), desk = TokenizerConfig::desk();
  v.require(paper.frame_rate() == 7.5, fmt("paper %g Hz", paper.frame_rate()));
  v.require(desk.frame_rate() == 25.0, fmt("desk %g Hz", desk.frame_rate()));
  // Encoders with the same factor stacks produce that many frames per second of audio.
  auto slim = paper;
  slim.stage_channels.assign(slim.stage_channels.size(), 2);
  slim.latent_dim = slim.semantic_dim = 4;
  slim.ffn_mult = 1;
  Rng rng(1);
  AcousticTokenizer<float> a(slim, rng), b(desk, rng);
  const auto fa = a.encode(noise_audio(2 * 24000, 24000, 2)).size();
  const auto fb = b.encode(noise_audio(2 * 8000, 8000, 3)).size();
  v.require(fa == 15, fmt("2 s at 24 kHz -> %g frames", double(fa)));
  v.require(fb == 50, fmt("2 s at 8 kHz -> %g frames", double(fb)));
  return v;
}

// ---- 2 ---------------------------------------------------------------------

Verdict sigma_vae_law() {
  Verdict v;
  const double C = 0.01;
  const std::size_t D = 16, N = 100000;
  std::vector<float> mu(D);
  for (std::size_t d = 0; d < D; ++d) mu[d] = static_cast<float>(0.3 * d - 2.0);
  std::vector<double> sum(D, 0.0), sumsq(D, 0.0);
  bool exact = true;
  for (std::size_t n = 0; n < N; ++n) {
    const auto draw = NoiseDraw::generate(D, C, 1000 + n);
    const auto z = sample_latent(mu, draw);
    for (std::size_t d = 0; d < D; ++d) {
      exact = exact && z[d] == mu[d] + draw.sigma[d] * draw.epsilon[d];
      sum[d] += z[d];
      sumsq[d] += (double(z[d]) - mu[d]) * (double(z[d]) - mu[d]);
    }
  }
  double mean_z = 0, var_rel = 0;
  for (std::size_t d = 0; d < D; ++d) {
    mean_z = std::max(mean_z, std::abs(sum[d] / N - mu[d]) / std::sqrt(C / N));
    var_rel = std::max(var_rel, std::abs(sumsq[d] / N - C) / C);
  }
  v.require(exact, "z = mu + sigma*eps from recorded draws");
  v.require(mean_z <= 4, fmt("mean within %.2f standard errors", mean_z));
  v.require(var_rel <= 0.05, fmt("E[(z-mu)^2] = C_sigma within %.2f%%", 100 * var_rel));
  return v;
}

// ---- 3 ---------------------------------------------------------------------

Verdict streaming_causality() {
  Verdict v;
  Rng rng(3);
  AcousticTokenizer<float> tok(TokenizerConfig::desk(), rng);
  const std::size_t hop = tok.config().hop();
  const auto audio = noise_audio(hop * 10 + 37, 8000, 4);
  const auto offline = tok.encode(audio);
  double enc_err = 0;
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    Rng cr(50 + seed);
    StreamingEncoder<float> enc(tok.encoder());
    FrameSequence streamed;
    for (std::size_t off = 0; off < audio.size();) {
      const std::size_t n = std::min<std::size_t>(1 + cr.index(2 * hop), audio.size() - off);
      for (auto& f : enc.push(std::span<const float>(audio.samples.data() + off, n))) streamed.push_back(f);
      off += n;
    }
    for (auto& f : enc.flush()) streamed.push_back(f);
    enc_err = std::max(enc_err, max_diff(offline, streamed));
  }
  v.require(enc_err <= 1e-5, fmt("streaming encode vs offline %.1e", enc_err));

  bool enc_causal = true;
  for (std::size_t t : {0ul, hop - 1, hop, 3 * hop + 5, 9 * hop}) {
    auto p = audio;
    p.samples[t] += 0.5f;
    const auto y = tok.encode(p);
    for (std::size_t f = 0; f < t / hop; ++f) enc_causal = enc_causal && y[f] == offline[f];
  }
  v.require(enc_causal, "encoder frames before a perturbation unchanged");

  const auto recon = tok.decode(offline);
  StreamingDecoder<float> dec(tok.decoder());
  double dec_err = 0;
  for (std::size_t f = 0; f < offline.size(); ++f) {
    const auto part = dec.push({offline[f]});
    for (std::size_t i = 0; i < part.size(); ++i)
      dec_err = std::max(dec_err, double(std::abs(part[i] - recon.samples[f * hop + i])));
  }
  v.require(dec_err <= 1e-5, fmt("frame-by-frame decode vs offline %.1e", dec_err));

  auto z = offline;
  z[5][0] += 1.0f;
  const auto y = tok.decode(z);
  bool dec_causal = true;
  for (std::size_t i = 0; i < 5 * hop; ++i) dec_causal = dec_causal && y.samples[i] == recon.samples[i];
  v.require(dec_causal, "decoder samples before a changed frame unchanged");

  SequencerConfig sc;
  sc.model_dim = 32;
  sc.layers = 2;
  sc.heads = 4;
  SequenceModel<float> model(sc, rng);
  VoicePrompt prompt{1, {}};
  for (int i = 0; i < 4; ++i) prompt.latents.push_back(rng.normal_vector<float>(sc.latent_dim));
  auto ctx = build_context({prompt}, {{1, {3, 4, 5}}});
  ctx.push_tag(1);
  for (int i = 0; i < 12; ++i) ctx.push_speech(1, rng.normal_vector<float>(sc.latent_dim), rng.normal_vector<float>(sc.semantic_dim));
  const auto h = model.forward(ctx).values();
  const std::size_t L = ctx.size(), Dm = sc.model_dim;
  bool seq_causal = true;
  for (std::size_t j = 0; j < L; ++j) {
    auto c2 = ctx;
    auto& p = c2.positions[j];
    if (p.role == Role::Speech || p.role == Role::Prompt)
      for (auto& x : p.latent) x += 1.0f;
    else
      p.token = (p.token + 1) % vocab::kNumPhones;
    const auto h2 = model.forward(c2).values();
    for (std::size_t i = 0; i < j * Dm; ++i) seq_causal = seq_causal && h[i] == h2[i];
  }
  v.require(seq_causal, fmt("sequencer rows before each of %g perturbed positions unchanged", double(L)));

  SequenceModel<float>::State state;
  ContextSequence grow;
  std::vector<float> inc;
  for (std::size_t n = ctx.speech_begin; n <= L; ++n) {
    grow.positions.assign(ctx.positions.begin(), ctx.positions.begin() + n);
    const auto part = model.extend(grow, state);
    inc.insert(inc.end(), part.values().begin(), part.values().end());
  }
  double inc_err = 0;
  for (std::size_t i = 0; i < inc.size(); ++i) inc_err = std::max(inc_err, double(std::abs(inc[i] - h[i])));
  v.require(inc.size() == h.size() && inc_err <= 1e-5, fmt("KV-cached extension vs full forward %.1e", inc_err));
  return v;
}

// ---- 4 ---------------------------------------------------------------------

Verdict gradient_suite() {
  using TD = Tensor<double>;
  using V = std::vector<TD>;
  double worst = 0;
  std::string worst_name;
  std::size_t checks = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    auto check = [&](const char* name, auto f, V in) {
      const auto r = grad_check(f, std::move(in));
      ++checks;
      if (r.max_rel_error > worst) {
        worst = r.max_rel_error;
        worst_name = name;
      }
    };
    check("matmul", [](const V& v) { return project(matmul(v[0], v[1])); }, {randn({3, 5}, rng), randn({5, 2}, rng)});
    check("gelu", [](const V& v) { return project(gelu(v[0])); }, {randn({4, 3}, rng)});
    check("silu", [](const V& v) { return project(silu(v[0])); }, {randn({4, 3}, rng)});
    check("layer_norm", [](const V& v) { return project(layer_norm(v[0], v[1], v[2], Axis::Rows)); },
          {randn({3, 6}, rng), randn({6}, rng), randn({6}, rng)});
    check("causal attention", [](const V& v) { return project(attention(v[0], v[1], v[2], true)); },
          {randn({4, 3}, rng), randn({4, 3}, rng), randn({4, 2}, rng)});
    check("multi-head attention", [](const V& v) { return project(multi_head_attention(v[0], v[1], v[2], 2, true)); },
          {randn({4, 4}, rng), randn({4, 4}, rng), randn({4, 4}, rng)});
    check("depthwise causal conv", [](const V& v) { return project(conv1d_depthwise_causal(v[0], v[1], 2)); },
          {randn({3, 9}, rng), randn({3, 3}, rng)});
    check("downsample", [](const V& v) { return project(downsample_block(v[0], v[1], v[2], 3)); },
          {randn({2, 9}, rng), randn({4, 6}, rng), randn({4}, rng)});
    check("upsample", [](const V& v) { return project(upsample_block(v[0], v[1], v[2], 3)); },
          {randn({2, 4}, rng), randn({9, 2}, rng), randn({3}, rng)});
    check("stft magnitude", [](const V& v) { return project(stft_magnitude(v[0], 8, 2)); }, {randn({1, 20}, rng)});
    check("mse/l1", [](const V& v) { return add(mse(v[0], v[1]), l1(v[0], v[1])); }, {randn({5}, rng), randn({5}, rng)});
    check("cross_entropy", [](const V& v) { return cross_entropy(v[0], {1, 0, 3}); }, {randn({3, 4}, rng)});
    check("bce_with_logits", [](const V& v) { return bce_with_logits(v[0], {1.0, 0.0, 0.3}); }, {randn({3}, rng)});

    // Whole modules: every parameter of a small diffusion head and sequencer.
    DiffusionHeadConfig hc;
    hc.latent_dim = 3;
    hc.cond_dim = 4;
    hc.width = 6;
    hc.blocks = 2;
    hc.time_dim = 4;
    DiffusionHead<double> head(hc, rng);
    const TD z = randn({2, 3}, rng), c = randn({2, 4}, rng);
    ParamList<double> hparams;
    head.collect(hparams);
    V hp;
    for (auto& [n, t] : hparams) hp.push_back(t);
    check("diffusion head", [&](const V&) { return project(head(z, {10, 700}, c)); }, hp);

    SequencerConfig sc;
    sc.latent_dim = 3;
    sc.semantic_dim = 2;
    sc.model_dim = 8;
    sc.heads = 2;
    sc.layers = 1;
    sc.ffn_mult = 2;
    sc.max_positions = 16;
    SequenceModel<double> seq(sc, rng);
    VoicePrompt p{1, {{0.1f, 0.2f, 0.3f}, {-0.3f, 0.0f, 0.5f}}};
    auto ctx = build_context({p}, {{1, {2, 7}}});
    ctx.push_tag(1);
    ctx.push_speech(1, {0.4f, -0.1f, 0.2f}, {0.3f, 0.9f});
    V sp;
    for (auto& [n, t] : seq.parameters()) sp.push_back(t);
    check("sequencer", [&](const V&) { return project(seq.forward(ctx)); }, sp);
  }
  Verdict v;
  v.require(worst <= 1e-4, fmt("%g finite-difference checks in double, worst relative error %.2e", double(checks), worst) +
                               " (" + worst_name + ")");
  return v;
}

// ---- 5 ---------------------------------------------------------------------

Verdict diffusion_oracles() {
  Verdict v;
  const auto sched = NoiseSchedule::cosine(1000);
  const std::vector<double> zstar{0.7, -1.2, 3.0, 0.0};
  double pm_err = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed);
    const auto z = dpm_solver_sample<double>(
        [&](const Tensor<double>& x, std::size_t t) {
          std::vector<double> e(x.size());
          for (std::size_t i = 0; i < x.size(); ++i)
            e[i] = (x[i] - sched.alpha(t) * zstar[i % 4]) / sched.sigma(t);
          return Tensor<double>(x.shape(), std::move(e));
        },
        1, 4, 1, sched, rng);
    for (std::size_t d = 0; d < 4; ++d) pm_err = std::max(pm_err, std::abs(z[d] - zstar[d]));
  }
  v.require(pm_err <= 1e-5, fmt("point mass, 1 step: error %.1e", pm_err));

  // Exact flow from the first sampling step t0 maps N(0, I) to
  // N(m (1 - sd alpha0 / sqrt(v0)), sd^2 / v0), v0 = alpha0^2 sd^2 + sigma0^2.
  const std::vector<double> m{1.5, -0.5, 0.0, 3.0};
  const double sd = 0.5;
  const std::size_t N = 40000;
  const std::size_t t0 = sched.first_sample_step();
  const double a0 = sched.alpha(t0), v0 = a0 * a0 * sd * sd + sched.sigma(t0) * sched.sigma(t0);
  const double shrink = 1 - sd * a0 / std::sqrt(v0), target_var = sd * sd / v0;
  Rng rng(21);
  const auto z = dpm_solver_sample<double>(
      [&](const Tensor<double>& x, std::size_t t) {
        const double a = sched.alpha(t), s = sched.sigma(t);
        std::vector<double> e(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) e[i] = s * (x[i] - a * m[i % 4]) / (a * a * sd * sd + s * s);
        return Tensor<double>(x.shape(), std::move(e));
      },
      N, 4, 10, sched, rng);
  double mean_err = 0, var_err = 0;
  for (std::size_t d = 0; d < 4; ++d) {
    double mu = 0, var = 0;
    for (std::size_t i = 0; i < N; ++i) mu += z[i * 4 + d];
    mu /= N;
    for (std::size_t i = 0; i < N; ++i) var += (z[i * 4 + d] - mu) * (z[i * 4 + d] - mu);
    var /= N - 1;
    mean_err = std::max(mean_err, std::abs(mu - m[d] * shrink) / sd);
    var_err = std::max(var_err, std::abs(var - target_var) / target_var);
  }
  v.require(mean_err <= 0.03 && var_err <= 0.10,
            fmt("Gaussian, 10 steps, 4e4 draws: mean err %.3f sd, variance err %.1f%%", mean_err, 100 * var_err));

  DiffusionHeadConfig hc;
  hc.latent_dim = 3;
  hc.cond_dim = 5;
  hc.width = 8;
  hc.blocks = 2;
  hc.time_dim = 8;
  DiffusionHead<double> head(hc, rng);
  const Tensor<double> x({3, 3}, rng.normal_vector<double>(9)), c({3, 5}, rng.normal_vector<double>(15));
  const std::vector<double> t{20, 500, 900};
  const auto cond = head(x, t, c), unc = head(x, t, head.uncond_rows(3));
  v.require(cfg_predict(head, x, t, c, 1.0).values() == cond.values() &&
                cfg_predict(head, x, t, c, 0.0).values() == unc.values(),
            "guidance w=1 conditional, w=0 unconditional, bitwise");
  const auto g = cfg_predict(head, x, t, c, 1.3);
  double gerr = 0;
  for (std::size_t i = 0; i < g.size(); ++i) gerr = std::max(gerr, std::abs(g[i] - (1.3 * cond[i] - 0.3 * unc[i])));
  v.require(gerr <= 1e-12, fmt("guidance w=1.3 vs direct %.1e", gerr));
  return v;
}

// ---- 6-9: desk run ----------------------------------------------------------

struct DeskRun {
  TokenizerReport tokenizers;
  TtsTrainResult tts;
  SpeakerEval speakers;
  double seconds = 0;
  bool frozen_bitwise = false;
  std::string checkpoint_bytes, reloaded_bytes;
  bool outputs_match = false;
  double wav_max_err = INFINITY;
  std::size_t wav_samples = 0;
};

DeskRun desk_run(const DeskConfig& cfg, const fs::path& work) {
  DeskRun r;
  const auto t0 = std::chrono::steady_clock::now();
  fs::create_directories(work);
  TrainLog log((work / "train_log.jsonl").string());
  const auto corpus = generate_corpus(default_speakers(), cfg.corpus_size, cfg.corpus_seed, cfg.corpus);
  Rng rng(cfg.init_seed);
  AcousticTokenizer<float> ac(cfg.tokenizer, rng);
  SemanticTokenizer<float> se(cfg.tokenizer, rng);
  r.tokenizers = pretrain_tokenizers(corpus, cfg, ac, se, &log);
  std::printf("  tokenizers: %.0f s + %.0f s, held-out SNR %.2f dB, probe %.3f\n", r.tokenizers.acoustic_seconds,
              r.tokenizers.semantic_seconds, r.tokenizers.heldout_snr_db, r.tokenizers.probe_accuracy);
  std::fflush(stdout);

  const auto ac_before = to_checkpoint(ac).serialize(), se_before = to_checkpoint(se).serialize();
  const auto prepared = prepare_tts_corpus(corpus.train, ac, se);
  TtsModel<float> model(TtsModelConfig::desk(cfg.tokenizer), rng);
  const auto t1 = std::chrono::steady_clock::now();
  r.tts = train_tts(model, prepared, ac, se, cfg.tts, &log);
  const auto [first, last] = smoothed_ends(r.tts.diffusion_losses);
  std::printf("  tts: %.0f s, smoothed loss %.4f -> %.4f\n", seconds_since(t1), first, last);
  std::fflush(stdout);

  r.speakers = evaluate_speakers(model, ac, se, corpus, cfg, cfg.tts.examples.prompt_frames);
  r.seconds = seconds_since(t0);
  r.frozen_bitwise = to_checkpoint(ac).serialize() == ac_before && to_checkpoint(se).serialize() == se_before;
  std::printf("  synthesis eval: %zu/%zu turns matched, duration ratio %.2f\n", r.speakers.matched, r.speakers.turns,
              r.speakers.mean_duration_ratio);

  // Checkpoint round trip through a file, then synthesis with the reloaded model.
  const auto ckpt_path = (work / "tts.ckpt").string();
  model.to_checkpoint().save(ckpt_path);
  r.checkpoint_bytes = model.to_checkpoint().serialize();
  const auto reloaded = TtsModel<float>::from_checkpoint(Checkpoint::load(ckpt_path));
  r.reloaded_bytes = reloaded.to_checkpoint().serialize();
  const auto& u = corpus.heldout.front();
  VoicePrompt prompt{static_cast<std::size_t>(u.speaker_id), {}};
  const auto mu = ac.encode(u.audio);
  prompt.latents.assign(mu.begin(), mu.begin() + std::min<std::ptrdiff_t>(cfg.tts.examples.prompt_frames, mu.size()));
  const std::vector<ScriptTurn> script{{prompt.speaker_id, u.phones}};
  const auto a = synthesize(model, ac, se, {prompt}, script, cfg.synthesis);
  const auto b = synthesize(reloaded, ac, se, {prompt}, script, cfg.synthesis);
  r.outputs_match = a.audio.samples == b.audio.samples;
  const auto wav_path = (work / "synth.wav").string();
  wav_write(a.audio, wav_path);
  const auto back = wav_read(wav_path);
  r.wav_samples = a.audio.samples.size();
  if (back.samples.size() == a.audio.samples.size() && back.sample_rate == a.audio.sample_rate) {
    r.wav_max_err = 0;
    for (std::size_t i = 0; i < back.samples.size(); ++i)
      r.wav_max_err = std::max(r.wav_max_err, double(std::abs(back.samples[i] - a.audio.samples[i])));
  }
  return r;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::string config_path, work = (fs::temp_directory_path() / "ntd_acceptance").string();
  bool skip_desk = false;
  app.add_option("--config", config_path, "desk configuration overrides")->check(CLI::ExistingFile);
  app.add_option("--workdir", work, "where logs, checkpoint and WAV are written");
  app.add_flag("--skip-desk", skip_desk, "only the fast criteria 1-5");
  CLI11_PARSE(app, argc, argv);

  report(1, "frame rate 7.5 Hz (paper) / 25 Hz (desk)", frame_rates);
  report(2, "sigma-VAE Monte Carlo law", sigma_vae_law);
  report(3, "streaming and causality", streaming_causality);
  report(4, "gradient suite", gradient_suite);
  report(5, "diffusion oracles", diffusion_oracles);
  if (skip_desk) return failures ? 1 : 0;

  DeskConfig cfg;
  std::optional<DeskRun> run;
  std::string run_error;
  try {
    cfg = DeskConfig::from(config_path.empty() ? Config{} : Config::load(config_path));
    run = desk_run(cfg, work);
  } catch (const std::exception& e) {
    run_error = std::string("desk run failed: ") + e.what();
  }
  auto needs_run = [&](auto f) {
    return [&, f]() -> Verdict {
      if (!run) return {false, run_error};
      return f(*run);
    };
  };

  report(6, "desk run", needs_run([&](const DeskRun& r) {
           Verdict v;
           const auto [first, last] = smoothed_ends(r.tts.diffusion_losses);
           v.require(r.seconds <= 1800, fmt("%.0f s wall time", r.seconds));
           v.require(r.tokenizers.heldout_snr_db >= 10, fmt("held-out SNR %.2f dB", r.tokenizers.heldout_snr_db));
           v.require(r.tokenizers.probe_accuracy >= 0.8, fmt("semantic probe %.1f%%", 100 * r.tokenizers.probe_accuracy));
           v.require(last <= first / 2, fmt("smoothed TTS loss %.3f -> %.3f", first, last));
           v.require(r.speakers.match_rate >= 0.9, fmt("speaker match %.1f%%", 100 * r.speakers.match_rate));
           return v;
         }));
  report(7, "frozen tokenizers bitwise unchanged", needs_run([](const DeskRun& r) {
           Verdict v;
           v.require(r.frozen_bitwise, "serialized parameters before/after TTS training and synthesis");
           v.require(r.tts.max_tokenizer_grad == 0, fmt("max tokenizer gradient %g", r.tts.max_tokenizer_grad));
           return v;
         }));
  report(8, "curriculum", needs_run([&](const DeskRun& r) {
           Verdict v;
           std::vector<CurriculumEvent> expected;
           std::size_t at = 0;
           for (std::size_t i = 0; i < cfg.tts.curriculum.stages.size(); ++i) {
             expected.push_back({at, i, cfg.tts.curriculum.stages[i].max_len});
             at += cfg.tts.curriculum.stages[i].steps;
           }
           std::string got;
           bool same = r.tts.transitions.size() == expected.size();
           for (std::size_t i = 0; i < r.tts.transitions.size(); ++i) {
             const auto& e = r.tts.transitions[i];
             got += (i ? ", " : "") + std::to_string(e.max_len) + "@" + std::to_string(e.step);
             same = same && i < expected.size() && e.step == expected[i].step && e.stage == expected[i].stage &&
                    e.max_len == expected[i].max_len;
           }
           v.require(same, got);
           std::vector<std::size_t> lens;
           for (const auto& s : cfg.tts.curriculum.stages) lens.push_back(s.max_len);
           v.require(lens == std::vector<std::size_t>{64, 128, 256, 512}, "lengths 64/128/256/512");
           return v;
         }));
  report(9, "checkpoint and WAV round trips", needs_run([](const DeskRun& r) {
           Verdict v;
           v.require(r.checkpoint_bytes == r.reloaded_bytes,
                     fmt("TTS checkpoint %g bytes bitwise after save/load", double(r.checkpoint_bytes.size())));
           v.require(r.outputs_match, "reloaded model synthesizes identical audio");
           v.require(r.wav_max_err <= 1.0 / 32767 + 1e-7,
                     fmt("WAV %g samples, max error %.2f LSB", double(r.wav_samples), r.wav_max_err * 32767));
           return v;
         }));
  return failures ? 1 : 0;
}
