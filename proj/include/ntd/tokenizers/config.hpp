#pragma once

#include <cstddef>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "ntd/errors.hpp"

namespace ntd {

// Geometry shared by the acoustic and semantic encoders: stages of causal conv
// blocks separated by strided downsampling layers, one per stage boundary.
struct TokenizerConfig {
  int sample_rate = 8000;
  std::vector<std::size_t> stage_channels{8, 16, 32, 64, 128};
  std::vector<std::size_t> downsample_factors{4, 4, 4, 5};
  std::size_t latent_dim = 16;    // acoustic mu/z width
  std::size_t semantic_dim = 16;  // semantic feature width
  double sigma_scale = 0.01;      // C_sigma: variance of the sigma prior
  std::size_t conv_width = 4;
  std::size_t ffn_mult = 4;
  std::size_t blocks_per_stage = 1;

  // Desk-scale default: 8 kHz, product 320, 25 Hz frames.
  static TokenizerConfig desk() { return {}; }

  // Full-scale geometry: 24 kHz, 7 stages, 6 downsampling layers, product 3200.
  static TokenizerConfig paper_scale() {
    TokenizerConfig c;
    c.sample_rate = 24000;
    c.stage_channels = {32, 64, 128, 256, 512, 1024, 2048};
    c.downsample_factors = {5, 5, 4, 4, 4, 2};
    c.latent_dim = 64;
    c.semantic_dim = 128;
    return c;
  }

  std::size_t hop() const {
    return std::accumulate(downsample_factors.begin(), downsample_factors.end(), std::size_t{1},
                           std::multiplies<>());
  }

  // Frames per second. Exact whenever sample_rate / hop is a dyadic fraction
  // (7.5 and 25 both are).
  double frame_rate() const { return static_cast<double>(sample_rate) / static_cast<double>(hop()); }

  std::size_t frames_for(std::size_t samples) const { return (samples + hop() - 1) / hop(); }

  void validate() const {
    if (sample_rate <= 0) throw ConfigError("tokenizer: sample_rate must be positive");
    if (downsample_factors.empty()) throw ConfigError("tokenizer: at least one downsampling layer required");
    for (auto f : downsample_factors)
      if (f < 1) throw ConfigError("tokenizer: downsample factors must be >= 1");
    if (stage_channels.size() != downsample_factors.size() + 1)
      throw ConfigError("tokenizer: need one more stage than downsampling layers (got " +
                        std::to_string(stage_channels.size()) + " stages, " +
                        std::to_string(downsample_factors.size()) + " layers)");
    for (auto c : stage_channels)
      if (c < 1) throw ConfigError("tokenizer: stage channels must be positive");
    if (latent_dim < 1 || semantic_dim < 1) throw ConfigError("tokenizer: latent/semantic width must be positive");
    if (sigma_scale < 0) throw ConfigError("tokenizer: sigma_scale must be nonnegative");
    if (conv_width < 1 || ffn_mult < 1) throw ConfigError("tokenizer: conv_width and ffn_mult must be positive");
  }

  bool same_geometry(const TokenizerConfig& o) const {
    return sample_rate == o.sample_rate && stage_channels == o.stage_channels &&
           downsample_factors == o.downsample_factors && latent_dim == o.latent_dim &&
           semantic_dim == o.semantic_dim && conv_width == o.conv_width && ffn_mult == o.ffn_mult &&
           blocks_per_stage == o.blocks_per_stage;
  }
};

}  // namespace ntd
