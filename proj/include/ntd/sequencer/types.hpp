#pragma once

#include <cstddef>
#include <vector>

namespace ntd {

// One line of the script: "SpeakerK: <phones>".
struct ScriptTurn {
  std::size_t speaker_id = 1;  // 1-based
  std::vector<std::size_t> text_tokens;
};

// Voice font: latents of a reference clip from the frozen acoustic tokenizer.
struct VoicePrompt {
  std::size_t speaker_id = 1;
  std::vector<std::vector<float>> latents;
};

}  // namespace ntd
