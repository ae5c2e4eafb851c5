#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "ntd/io/audio.hpp"

namespace ntd {

namespace detail {

inline std::uint32_t read_le(const std::vector<unsigned char>& b, std::size_t off, std::size_t n) {
  std::uint32_t v = 0;
  for (std::size_t i = 0; i < n; ++i) v |= static_cast<std::uint32_t>(b[off + i]) << (8 * i);
  return v;
}

inline void put_le(std::string& out, std::uint32_t v, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

}  // namespace detail

// 16-bit PCM mono. Samples are clamped to [-1, 1] and rounded to the nearest step of 1/32767.
inline void wav_write(const AudioBuffer& audio, const std::string& path) {
  if (audio.sample_rate <= 0) throw ContractError("wav_write: sample rate must be positive");
  if (!audio.all_finite()) throw DataError("wav_write: audio contains non-finite samples");
  const auto data_bytes = static_cast<std::uint32_t>(audio.size() * 2);
  std::string out;
  out.reserve(44 + data_bytes);
  out += "RIFF";
  detail::put_le(out, 36 + data_bytes, 4);
  out += "WAVEfmt ";
  detail::put_le(out, 16, 4);
  detail::put_le(out, 1, 2);  // PCM
  detail::put_le(out, 1, 2);  // mono
  detail::put_le(out, static_cast<std::uint32_t>(audio.sample_rate), 4);
  detail::put_le(out, static_cast<std::uint32_t>(audio.sample_rate) * 2, 4);
  detail::put_le(out, 2, 2);
  detail::put_le(out, 16, 2);
  out += "data";
  detail::put_le(out, data_bytes, 4);
  for (float s : audio.samples) {
    const auto q = static_cast<std::int16_t>(std::lround(std::clamp(s, -1.0f, 1.0f) * 32767.0f));
    detail::put_le(out, static_cast<std::uint16_t>(q), 2);
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open " + path + " for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw DataError("write failed: " + path);
}

inline AudioBuffer wav_read(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open " + path);
  const std::vector<unsigned char> b((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  auto fail = [&](const std::string& what, std::size_t off) {
    throw FormatError(path + ": " + what + " at byte offset " + std::to_string(off));
  };
  auto tag = [&](std::size_t off, const char* t) { return off + 4 <= b.size() && std::equal(t, t + 4, b.begin() + off); };
  if (!tag(0, "RIFF")) fail("missing RIFF tag", 0);
  if (!tag(8, "WAVE")) fail("missing WAVE tag", 8);
  AudioBuffer out;
  bool have_fmt = false;
  std::size_t off = 12;
  while (off + 8 <= b.size()) {
    const std::uint32_t size = detail::read_le(b, off + 4, 4);
    const std::size_t body = off + 8;
    if (body + size > b.size()) fail("chunk extends past end of file", off);
    if (tag(off, "fmt ")) {
      if (size < 16) fail("fmt chunk too short", off);
      const auto format = detail::read_le(b, body, 2);
      const auto channels = detail::read_le(b, body + 2, 2);
      const auto bits = detail::read_le(b, body + 14, 2);
      if (format != 1) fail("unsupported encoding " + std::to_string(format) + " (PCM only)", body);
      if (channels != 1) fail("unsupported channel count " + std::to_string(channels), body + 2);
      if (bits != 16) fail("unsupported bit depth " + std::to_string(bits), body + 14);
      out.sample_rate = static_cast<int>(detail::read_le(b, body + 4, 4));
      have_fmt = true;
    } else if (tag(off, "data")) {
      if (!have_fmt) fail("data chunk before fmt chunk", off);
      if (size % 2) fail("odd data size", off + 4);
      out.samples.resize(size / 2);
      for (std::size_t i = 0; i < out.samples.size(); ++i) {
        const auto raw = static_cast<std::int16_t>(detail::read_le(b, body + 2 * i, 2));
        out.samples[i] = static_cast<float>(raw) / 32767.0f;
      }
      return out;
    }
    off = body + size + (size & 1);
  }
  fail(have_fmt ? "missing data chunk" : "missing fmt chunk", off);
  return out;
}

}  // namespace ntd
