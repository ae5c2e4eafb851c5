#pragma once

#include <cstddef>
#include <string>

#include "ntd/errors.hpp"

// Shared token vocabulary: 16 synthetic phones followed by 8 special tokens.
namespace ntd::vocab {

inline constexpr std::size_t kNumPhones = 16;
inline constexpr std::size_t kMaxSpeakers = 4;
inline constexpr std::size_t kSpeakerBase = kNumPhones;  // Speaker1 .. Speaker4
inline constexpr std::size_t kBos = kSpeakerBase + kMaxSpeakers;
inline constexpr std::size_t kEos = kBos + 1;
inline constexpr std::size_t kPad = kBos + 2;
inline constexpr std::size_t kUncond = kBos + 3;
inline constexpr std::size_t kSize = kBos + 4;

// speaker is 1-based, as in "Speaker1".
inline std::size_t speaker_tag(std::size_t speaker) {
  if (speaker < 1 || speaker > kMaxSpeakers)
    throw ConfigError("speaker id " + std::to_string(speaker) + " outside [1, 4]");
  return kSpeakerBase + speaker - 1;
}

inline bool is_phone(std::size_t id) { return id < kNumPhones; }

}  // namespace ntd::vocab
