#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "ntd/io/corpus.hpp"
#include "ntd/io/script.hpp"
#include "ntd/io/wav.hpp"

namespace ntd {

// Directory layout: manifest.tsv plus one WAV per utterance.
// manifest line: index <TAB> train|heldout <TAB> speaker <TAB> file <TAB> phones
inline void write_corpus(const Corpus& c, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::ofstream m(fs::path(dir) / "manifest.tsv");
  if (!m) throw DataError("cannot write " + (fs::path(dir) / "manifest.tsv").string());
  auto emit = [&](const Utterance& u, const char* split) {
    const std::string file = "utt" + std::to_string(u.index) + ".wav";
    wav_write(u.audio, (fs::path(dir) / file).string());
    m << u.index << '\t' << split << '\t' << u.speaker_id << '\t' << file << '\t';
    for (std::size_t i = 0; i < u.phones.size(); ++i) m << (i ? " " : "") << phone_name(u.phones[i]);
    m << '\n';
  };
  for (const auto& u : c.train) emit(u, "train");
  for (const auto& u : c.heldout) emit(u, "heldout");
}

inline Corpus read_corpus(const std::string& dir) {
  namespace fs = std::filesystem;
  const auto path = fs::path(dir) / "manifest.tsv";
  std::ifstream m(path);
  if (!m) throw DataError("cannot open corpus manifest " + path.string());
  Corpus c;
  std::string line;
  for (std::size_t lineno = 1; std::getline(m, line); ++lineno) {
    if (line.empty()) continue;
    std::istringstream in(line);
    std::string index, split, speaker, file, phones;
    if (!std::getline(in, index, '\t') || !std::getline(in, split, '\t') || !std::getline(in, speaker, '\t') ||
        !std::getline(in, file, '\t') || !std::getline(in, phones))
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected 5 tab-separated fields");
    Utterance u;
    try {
      u.index = std::stoul(index);
      u.speaker_id = std::stoi(speaker);
    } catch (const std::exception&) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": bad index or speaker");
    }
    std::istringstream ps(phones);
    for (std::string tok; ps >> tok;) u.phones.push_back(parse_phone(tok));
    u.audio = wav_read((fs::path(dir) / file).string());
    if (split == "train") {
      c.train.push_back(std::move(u));
    } else if (split == "heldout") {
      c.heldout.push_back(std::move(u));
    } else {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": split must be train or heldout");
    }
  }
  if (c.train.empty()) throw DataError("corpus " + dir + " has no training utterances");
  return c;
}

}  // namespace ntd
