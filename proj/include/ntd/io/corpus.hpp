#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "ntd/io/audio.hpp"
#include "ntd/numcore/rng.hpp"
#include "ntd/sequencer/vocab.hpp"

namespace ntd {

// A synthetic voice: harmonic source at f0 with per-speaker formant shifts.
struct SpeakerSpec {
  int speaker_id = 1;  // 1-based, matches the script's SpeakerK
  double f0 = 100;
  std::vector<double> formant_offsets{0, 0};  // added to F1, F2 (Hz)
  double amplitude = 0.5;
  double attack_seconds = 0.008;
  double release_seconds = 0.012;
};

struct CorpusConfig {
  int sample_rate = 8000;
  double phone_seconds = 0.2;
  std::size_t min_phones = 3;
  std::size_t max_phones = 6;
  double noise_std = 0.003;
  double harmonic_limit = 2000;  // no partials at or above this frequency
  double amplitude_jitter = 0.1;
  std::size_t heldout_every = 10;  // every 10th utterance is held out (90/10)

  std::size_t phone_samples() const { return static_cast<std::size_t>(std::lround(phone_seconds * sample_rate)); }
};

struct Utterance {
  AudioBuffer audio;
  std::vector<std::size_t> phones;
  int speaker_id = 1;
  std::size_t index = 0;
};

struct Corpus {
  std::vector<Utterance> train;
  std::vector<Utterance> heldout;
};

// Four voices with F0 spaced >= 20% apart.
inline std::vector<SpeakerSpec> default_speakers() {
  const double f0[] = {100, 125, 160, 200};
  const double off[] = {-40, 0, 40, 80};
  const double amp[] = {0.55, 0.5, 0.45, 0.5};
  std::vector<SpeakerSpec> out;
  for (int k = 0; k < 4; ++k) out.push_back({k + 1, f0[k], {off[k], 2 * off[k]}, amp[k], 0.008, 0.012});
  return out;
}

// Phone p sits on a 4x4 grid of first and second formants.
inline double phone_f1(std::size_t p) { return 300.0 + 200.0 * static_cast<double>(p / 4); }
inline double phone_f2(std::size_t p) { return 1100.0 + 400.0 * static_cast<double>(p % 4); }

// Unit-peak waveform of one phone before envelope and gain.
inline std::vector<double> phone_waveform(const SpeakerSpec& spk, std::size_t phone, const CorpusConfig& cfg) {
  const std::size_t n = cfg.phone_samples();
  const double fa = phone_f1(phone) + spk.formant_offsets.at(0);
  const double fb = phone_f2(phone) + spk.formant_offsets.at(1);
  std::vector<double> y(n, 0.0);
  for (int k = 1; k * spk.f0 < cfg.harmonic_limit; ++k) {
    const double f = k * spk.f0;
    const double a = 0.25 / k + std::exp(-std::pow((f - fa) / 120.0, 2)) + 0.7 * std::exp(-std::pow((f - fb) / 160.0, 2));
    for (std::size_t i = 0; i < n; ++i) y[i] += a * std::sin(2 * M_PI * f * static_cast<double>(i) / cfg.sample_rate);
  }
  double peak = 0;
  for (double v : y) peak = std::max(peak, std::abs(v));
  if (peak > 0)
    for (double& v : y) v /= peak;
  return y;
}

inline AudioBuffer render_utterance(const SpeakerSpec& spk, const std::vector<std::size_t>& phones,
                                    const CorpusConfig& cfg, Rng& rng) {
  const std::size_t n = cfg.phone_samples();
  const auto na = static_cast<std::size_t>(spk.attack_seconds * cfg.sample_rate);
  const auto nr = static_cast<std::size_t>(spk.release_seconds * cfg.sample_rate);
  AudioBuffer out;
  out.sample_rate = cfg.sample_rate;
  out.samples.reserve(n * phones.size());
  for (auto p : phones) {
    if (!vocab::is_phone(p)) throw DataError("render_utterance: " + std::to_string(p) + " is not a phone");
    const auto y = phone_waveform(spk, p, cfg);
    const double gain = spk.amplitude * (1 + cfg.amplitude_jitter * (2 * rng.uniform() - 1));
    for (std::size_t i = 0; i < n; ++i) {
      double env = 1;
      if (i < na) env = static_cast<double>(i) / std::max<std::size_t>(na - 1, 1);
      if (i >= n - nr) env = std::min(env, static_cast<double>(n - 1 - i) / std::max<std::size_t>(nr - 1, 1));
      out.samples.push_back(static_cast<float>(gain * env * y[i]));
    }
  }
  for (auto& s : out.samples) s += static_cast<float>(rng.normal() * cfg.noise_std);
  return out;
}

// Utterance i depends only on (seed, i); held-out membership only on i.
inline Corpus generate_corpus(const std::vector<SpeakerSpec>& specs, std::size_t size, std::uint64_t seed,
                              const CorpusConfig& cfg = {}) {
  if (specs.size() < 2) throw ContractError("generate_corpus: need at least 2 speakers");
  if (size < 1) throw ContractError("generate_corpus: size must be >= 1");
  if (cfg.min_phones < 1 || cfg.max_phones < cfg.min_phones) throw ConfigError("generate_corpus: bad phone count range");
  Corpus c;
  for (std::size_t i = 0; i < size; ++i) {
    Rng rng(seed * 0x9E3779B97F4A7C15ULL + i + 1);
    Utterance u;
    u.index = i;
    const auto& spk = specs[rng.index(specs.size())];
    u.speaker_id = spk.speaker_id;
    const std::size_t len = cfg.min_phones + rng.index(cfg.max_phones - cfg.min_phones + 1);
    for (std::size_t k = 0; k < len; ++k) u.phones.push_back(rng.index(vocab::kNumPhones));
    u.audio = render_utterance(spk, u.phones, cfg, rng);
    const bool held = cfg.heldout_every > 0 && i % cfg.heldout_every == cfg.heldout_every - 1;
    (held ? c.heldout : c.train).push_back(std::move(u));
  }
  return c;
}

}  // namespace ntd
