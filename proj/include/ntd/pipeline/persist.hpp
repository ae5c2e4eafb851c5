#pragma once

#include <string>

#include "ntd/io/checkpoint.hpp"
#include "ntd/io/config.hpp"
#include "ntd/tokenizers/semantic.hpp"

namespace ntd {

inline void write_tokenizer_config(Config& c, const TokenizerConfig& t, const std::string& p = "tokenizer") {
  c.set(p + ".sample_rate", static_cast<double>(t.sample_rate));
  c.set_list(p + ".stage_channels", t.stage_channels);
  c.set_list(p + ".downsample_factors", t.downsample_factors);
  c.set(p + ".latent_dim", static_cast<double>(t.latent_dim));
  c.set(p + ".semantic_dim", static_cast<double>(t.semantic_dim));
  c.set(p + ".sigma_scale", t.sigma_scale);
  c.set(p + ".conv_width", static_cast<double>(t.conv_width));
  c.set(p + ".ffn_mult", static_cast<double>(t.ffn_mult));
  c.set(p + ".blocks_per_stage", static_cast<double>(t.blocks_per_stage));
}

// Missing keys keep the desk defaults.
inline TokenizerConfig read_tokenizer_config(const Config& c, const std::string& p = "tokenizer") {
  TokenizerConfig t;
  t.sample_rate = static_cast<int>(c.get_int(p + ".sample_rate", t.sample_rate));
  t.stage_channels = c.get_sizes(p + ".stage_channels", t.stage_channels);
  t.downsample_factors = c.get_sizes(p + ".downsample_factors", t.downsample_factors);
  t.latent_dim = c.get_size(p + ".latent_dim", t.latent_dim);
  t.semantic_dim = c.get_size(p + ".semantic_dim", t.semantic_dim);
  t.sigma_scale = c.get_double(p + ".sigma_scale", t.sigma_scale);
  t.conv_width = c.get_size(p + ".conv_width", t.conv_width);
  t.ffn_mult = c.get_size(p + ".ffn_mult", t.ffn_mult);
  t.blocks_per_stage = c.get_size(p + ".blocks_per_stage", t.blocks_per_stage);
  t.validate();
  return t;
}

namespace detail {

inline Config checkpoint_config(const Checkpoint& ck, const std::string& kind) {
  const auto c = Config::parse(ck.config, "checkpoint config");
  const auto k = c.get_string("kind", "");
  if (k != kind) throw FormatError("expected a " + kind + " checkpoint, found '" + k + "'");
  return c;
}

}  // namespace detail

template <typename T>
Checkpoint to_checkpoint(const AcousticTokenizer<T>& tok) {
  Config c;
  c.set("kind", std::string("acoustic"));
  write_tokenizer_config(c, tok.config());
  Checkpoint ck;
  ck.config = c.to_string();
  ck.add(tok.parameters());
  return ck;
}

template <typename T>
Checkpoint to_checkpoint(const SemanticTokenizer<T>& tok) {
  Config c;
  c.set("kind", std::string("semantic"));
  write_tokenizer_config(c, tok.config());
  Checkpoint ck;
  ck.config = c.to_string();
  ck.add(tok.parameters());
  return ck;
}

inline AcousticTokenizer<float> acoustic_from_checkpoint(const Checkpoint& ck) {
  const auto c = detail::checkpoint_config(ck, "acoustic");
  Rng rng(0);
  AcousticTokenizer<float> tok(read_tokenizer_config(c), rng);
  ck.restore(tok.parameters());
  return tok;
}

inline SemanticTokenizer<float> semantic_from_checkpoint(const Checkpoint& ck) {
  const auto c = detail::checkpoint_config(ck, "semantic");
  Rng rng(0);
  SemanticTokenizer<float> tok(read_tokenizer_config(c), rng);
  ck.restore(tok.parameters());
  return tok;
}

}  // namespace ntd
