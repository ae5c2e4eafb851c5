#pragma once

#include <cctype>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "ntd/errors.hpp"
#include "ntd/sequencer/types.hpp"
#include "ntd/sequencer/vocab.hpp"

namespace ntd {

inline std::string phone_name(std::size_t p) { return "p" + std::to_string(p); }

// Accepts "p7" or "7".
inline std::size_t parse_phone(const std::string& tok) {
  std::string digits = tok;
  if (!digits.empty() && (digits[0] == 'p' || digits[0] == 'P')) digits.erase(0, 1);
  if (digits.empty() || digits.size() > 3) throw DataError("unknown phone '" + tok + "'");
  for (char ch : digits)
    if (!std::isdigit(static_cast<unsigned char>(ch))) throw DataError("unknown phone '" + tok + "'");
  const auto id = static_cast<std::size_t>(std::stoul(digits));
  if (!vocab::is_phone(id)) throw DataError("unknown phone '" + tok + "'");
  return id;
}

// UTF-8 lines of `SpeakerK: <phone tokens>`; blank lines and `#` comments are skipped.
inline std::vector<ScriptTurn> parse_script(const std::string& text, const std::string& origin = "script") {
  std::vector<ScriptTurn> turns;
  std::istringstream in(text);
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    const auto where = origin + ":" + std::to_string(lineno) + ": ";
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto colon = line.find(':');
    if (colon == std::string::npos) throw FormatError(where + "expected 'SpeakerK: tokens'");
    std::istringstream head(line.substr(0, colon));
    std::string label;
    head >> label;
    if (label.rfind("Speaker", 0) != 0 || label.size() == 7)
      throw FormatError(where + "expected a Speaker label, got '" + label + "'");
    ScriptTurn t;
    try {
      t.speaker_id = static_cast<std::size_t>(std::stoul(label.substr(7)));
    } catch (const std::exception&) {
      throw FormatError(where + "bad speaker label '" + label + "'");
    }
    vocab::speaker_tag(t.speaker_id);
    std::istringstream body(line.substr(colon + 1));
    for (std::string tok; body >> tok;) {
      try {
        t.text_tokens.push_back(parse_phone(tok));
      } catch (const DataError& e) {
        throw DataError(where + e.what());
      }
    }
    if (t.text_tokens.empty()) throw FormatError(where + "turn has no tokens");
    turns.push_back(std::move(t));
  }
  return turns;
}

inline std::vector<ScriptTurn> load_script(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open script " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_script(ss.str(), path);
}

inline std::string format_script(const std::vector<ScriptTurn>& turns) {
  std::string out;
  for (const auto& t : turns) {
    out += "Speaker" + std::to_string(t.speaker_id) + ":";
    for (auto p : t.text_tokens) out += " " + phone_name(p);
    out += "\n";
  }
  return out;
}

}  // namespace ntd
