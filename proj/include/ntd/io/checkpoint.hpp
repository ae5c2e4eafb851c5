#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <string>
#include <vector>

#include <zlib.h>

#include "ntd/numcore/layers.hpp"

namespace ntd {

// Single-file container:
//   "NTDCKPT\0" | u32 version | u32 len, config text | u32 count,
//   { u32 len, name | u32 rank, u64 dims... | f32 data... }* | u32 crc32 of all preceding bytes
// Integers and floats are little-endian.
struct Checkpoint {
  static constexpr char kMagic[8] = {'N', 'T', 'D', 'C', 'K', 'P', 'T', '\0'};
  static constexpr std::uint32_t kVersion = 1;

  struct Entry {
    std::string name;
    Shape shape;
    std::vector<float> data;
  };

  std::string config;
  std::vector<Entry> tensors;

  template <typename T>
  void add(const ParamList<T>& params) {
    for (const auto& [name, t] : params) tensors.push_back({name, t.shape(), {t.values().begin(), t.values().end()}});
  }

  const Entry* find(const std::string& name) const {
    for (const auto& e : tensors)
      if (e.name == name) return &e;
    return nullptr;
  }

  // Copies stored values into `params` in place. Every parameter must be present with the same shape.
  template <typename T>
  void restore(const ParamList<T>& params) const {
    for (const auto& [name, t] : params) {
      const Entry* e = find(name);
      if (!e) throw FormatError("checkpoint has no tensor '" + name + "'");
      if (e->shape != t.shape())
        throw ShapeError("checkpoint tensor '" + name + "' has shape " + shape_str(e->shape) + ", model expects " +
                         shape_str(t.shape()));
      auto dst = Tensor<T>(t).mutable_data();  // handles share storage
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(e->data[i]);
    }
  }

  std::string serialize() const {
    std::string out(kMagic, kMagic + 8);
    put32(out, kVersion);
    put32(out, static_cast<std::uint32_t>(config.size()));
    out += config;
    put32(out, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& e : tensors) {
      if (shape_size(e.shape) != e.data.size()) throw ShapeError("checkpoint tensor '" + e.name + "': data/shape mismatch");
      put32(out, static_cast<std::uint32_t>(e.name.size()));
      out += e.name;
      put32(out, static_cast<std::uint32_t>(e.shape.size()));
      for (auto d : e.shape) put64(out, d);
      for (float v : e.data) {
        std::uint32_t bits;
        std::memcpy(&bits, &v, 4);
        put32(out, bits);
      }
    }
    put32(out, crc(out.data(), out.size()));
    return out;
  }

  static Checkpoint deserialize(const std::string& bytes, const std::string& origin = "checkpoint") {
    auto fail = [&](const std::string& what, std::size_t off) {
      throw FormatError(origin + ": " + what + " at byte offset " + std::to_string(off));
    };
    if (bytes.size() < 8 + 4 + 4 + 4 + 4 || std::memcmp(bytes.data(), kMagic, 8) != 0) fail("bad magic", 0);
    const std::size_t body = bytes.size() - 4;
    if (get32(bytes, body) != crc(bytes.data(), body)) fail("checksum mismatch", body);
    std::size_t off = 8;
    auto need = [&](std::size_t n) {
      if (off + n > body) fail("truncated", off);
    };
    auto read32 = [&] {
      need(4);
      auto v = get32(bytes, off);
      off += 4;
      return v;
    };
    if (auto v = read32(); v != kVersion) fail("unsupported version " + std::to_string(v), off - 4);
    Checkpoint c;
    const auto clen = read32();
    need(clen);
    c.config = bytes.substr(off, clen);
    off += clen;
    const auto count = read32();
    for (std::uint32_t i = 0; i < count; ++i) {
      Entry e;
      const auto nlen = read32();
      need(nlen);
      e.name = bytes.substr(off, nlen);
      off += nlen;
      const auto rank = read32();
      for (std::uint32_t r = 0; r < rank; ++r) {
        need(8);
        e.shape.push_back(static_cast<std::size_t>(get32(bytes, off)) |
                          (static_cast<std::size_t>(get32(bytes, off + 4)) << 32));
        off += 8;
      }
      const std::size_t n = shape_size(e.shape);
      need(4 * n);
      e.data.resize(n);
      for (std::size_t k = 0; k < n; ++k) {
        const std::uint32_t bits = get32(bytes, off + 4 * k);
        std::memcpy(&e.data[k], &bits, 4);
      }
      off += 4 * n;
      c.tensors.push_back(std::move(e));
    }
    if (off != body) fail("trailing bytes", off);
    return c;
  }

  void save(const std::string& path) const {
    const auto bytes = serialize();
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open " + path + " for writing");
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw DataError("write failed: " + path);
  }

  static Checkpoint load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open checkpoint " + path);
    const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return deserialize(bytes, path);
  }

 private:
  static void put32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  static void put64(std::string& out, std::uint64_t v) {
    put32(out, static_cast<std::uint32_t>(v));
    put32(out, static_cast<std::uint32_t>(v >> 32));
  }
  static std::uint32_t get32(const std::string& b, std::size_t off) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(b[off + i])) << (8 * i);
    return v;
  }
  static std::uint32_t crc(const char* p, std::size_t n) {
    return static_cast<std::uint32_t>(::crc32(0L, reinterpret_cast<const Bytef*>(p), static_cast<uInt>(n)));
  }
};

}  // namespace ntd
