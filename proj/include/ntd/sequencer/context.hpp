#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "ntd/errors.hpp"
#include "ntd/sequencer/types.hpp"
#include "ntd/sequencer/vocab.hpp"

namespace ntd {

enum class Role { SpeakerTag, Prompt, Text, Speech };

inline const char* role_name(Role r) {
  switch (r) {
    case Role::SpeakerTag: return "tag";
    case Role::Prompt: return "prompt";
    case Role::Text: return "text";
    case Role::Speech: return "speech";
  }
  return "?";
}

// One element of the interleaved context. Tags and text carry a vocabulary id;
// prompt frames carry an acoustic latent; speech frames carry the latent and
// the semantic features of the same frame.
struct ContextPosition {
  Role role = Role::Text;
  std::size_t speaker_id = 0;
  std::size_t token = 0;
  std::vector<float> latent;
  std::vector<float> semantic;
};

struct ContextSequence {
  std::vector<ContextPosition> positions;
  std::size_t speech_begin = 0;  // first position after the prompt and script blocks

  std::size_t size() const { return positions.size(); }
  const ContextPosition& operator[](std::size_t i) const { return positions[i]; }

  void push_tag(std::size_t speaker) {
    positions.push_back({Role::SpeakerTag, speaker, vocab::speaker_tag(speaker), {}, {}});
  }
  void push_speech(std::size_t speaker, std::vector<float> z, std::vector<float> semantic) {
    positions.push_back({Role::Speech, speaker, 0, std::move(z), std::move(semantic)});
  }
};

// [Spk_a: prompt_a][Spk_b: prompt_b]... then [Spk: turn tokens] for every
// script turn, in input order. Speech regions are appended by the caller.
inline ContextSequence build_context(const std::vector<VoicePrompt>& prompts, const std::vector<ScriptTurn>& script) {
  if (prompts.empty()) throw ConfigError("build_context: at least one voice prompt is required");
  if (prompts.size() > vocab::kMaxSpeakers)
    throw ConfigError("build_context: " + std::to_string(prompts.size()) + " speakers, at most 4 supported");
  std::vector<std::size_t> seen;
  for (const auto& p : prompts) {
    vocab::speaker_tag(p.speaker_id);  // range check
    if (std::find(seen.begin(), seen.end(), p.speaker_id) != seen.end())
      throw DataError("build_context: two prompts for Speaker" + std::to_string(p.speaker_id));
    if (p.latents.empty()) throw DataError("build_context: empty prompt for Speaker" + std::to_string(p.speaker_id));
    seen.push_back(p.speaker_id);
  }

  ContextSequence ctx;
  for (const auto& p : prompts) {
    ctx.push_tag(p.speaker_id);
    for (const auto& z : p.latents) ctx.positions.push_back({Role::Prompt, p.speaker_id, 0, z, {}});
  }
  for (std::size_t i = 0; i < script.size(); ++i) {
    const auto& turn = script[i];
    if (turn.speaker_id < 1 || turn.speaker_id > vocab::kMaxSpeakers)
      throw ConfigError("build_context: turn " + std::to_string(i + 1) + " names Speaker" +
                        std::to_string(turn.speaker_id) + ", at most 4 supported");
    if (std::find(seen.begin(), seen.end(), turn.speaker_id) == seen.end())
      throw DataError("build_context: turn " + std::to_string(i + 1) + " names Speaker" +
                      std::to_string(turn.speaker_id) + ", which has no voice prompt");
    if (turn.text_tokens.empty()) throw DataError("build_context: turn " + std::to_string(i + 1) + " is empty");
    ctx.push_tag(turn.speaker_id);
    for (auto tok : turn.text_tokens) {
      if (!vocab::is_phone(tok)) throw DataError("build_context: token " + std::to_string(tok) + " is not a phone");
      ctx.positions.push_back({Role::Text, turn.speaker_id, tok, {}, {}});
    }
  }
  ctx.speech_begin = ctx.size();
  return ctx;
}

}  // namespace ntd
