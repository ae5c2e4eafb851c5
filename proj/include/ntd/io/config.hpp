#pragma once

#include <cstddef>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "ntd/errors.hpp"

namespace ntd {

// Flat key-value tree with dotted keys, one `key = value` per line.
// Values are scalars or bracketed lists: `tokenizer.downsample_factors = [4,4,4,5]`.
// `#` starts a comment.
class Config {
 public:
  static Config parse(const std::string& text, const std::string& origin = "config") {
    Config c;
    std::istringstream in(text);
    std::string line;
    for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
      if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw FormatError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
      const auto key = trim(line.substr(0, eq));
      const auto value = trim(line.substr(eq + 1));
      if (key.empty() || key.find_first_of(" \t") != std::string::npos)
        throw FormatError(origin + ":" + std::to_string(lineno) + ": bad key '" + key + "'");
      c.values_[key] = value;
    }
    return c;
  }

  static Config load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw DataError("cannot open config " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse(ss.str(), path);
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::map<std::string, std::string>& values() const { return values_; }

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  void set(const std::string& key, double value) {
    std::ostringstream os;
    os.precision(17);
    os << value;
    values_[key] = os.str();
  }
  template <typename T>
  void set_list(const std::string& key, const std::vector<T>& v) {
    std::ostringstream os;
    os.precision(17);
    os << '[';
    for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
    os << ']';
    values_[key] = os.str();
  }

  std::string get_string(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }
  std::string require_string(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("missing config key '" + key + "'");
    return it->second;
  }

  double get_double(const std::string& key, double fallback) const {
    return has(key) ? to_double(key, values_.at(key)) : fallback;
  }
  long long get_int(const std::string& key, long long fallback) const {
    return has(key) ? to_int(key, values_.at(key)) : fallback;
  }
  std::size_t get_size(const std::string& key, std::size_t fallback) const {
    const auto v = get_int(key, static_cast<long long>(fallback));
    if (v < 0) throw ConfigError("config key '" + key + "' must be nonnegative");
    return static_cast<std::size_t>(v);
  }

  std::vector<double> get_doubles(const std::string& key, const std::vector<double>& fallback) const {
    if (!has(key)) return fallback;
    std::vector<double> out;
    for (const auto& item : split_list(key)) out.push_back(to_double(key, item));
    return out;
  }
  std::vector<std::size_t> get_sizes(const std::string& key, const std::vector<std::size_t>& fallback) const {
    if (!has(key)) return fallback;
    std::vector<std::size_t> out;
    for (const auto& item : split_list(key)) {
      const auto v = to_int(key, item);
      if (v < 0) throw ConfigError("config key '" + key + "' must hold nonnegative integers");
      out.push_back(static_cast<std::size_t>(v));
    }
    return out;
  }

  // Keys under `prefix.` with the prefix stripped.
  Config subtree(const std::string& prefix) const {
    Config c;
    const auto p = prefix + ".";
    for (const auto& [k, v] : values_)
      if (k.compare(0, p.size(), p) == 0) c.values_[k.substr(p.size())] = v;
    return c;
  }

  void merge(const Config& other, const std::string& prefix = "") {
    for (const auto& [k, v] : other.values_) values_[prefix.empty() ? k : prefix + "." + k] = v;
  }

  std::string to_string() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
    return out;
  }

 private:
  std::map<std::string, std::string> values_;

  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
  }

  std::vector<std::string> split_list(const std::string& key) const {
    const auto& raw = values_.at(key);
    if (raw.size() < 2 || raw.front() != '[' || raw.back() != ']')
      throw ConfigError("config key '" + key + "' must be a list like [1,2,3], got '" + raw + "'");
    std::vector<std::string> items;
    std::istringstream in(raw.substr(1, raw.size() - 2));
    std::string item;
    while (std::getline(in, item, ',')) {
      item = trim(item);
      if (!item.empty()) items.push_back(item);
    }
    return items;
  }

  static double to_double(const std::string& key, const std::string& s) {
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != s.size() || s.empty()) throw ConfigError("config key '" + key + "': '" + s + "' is not a number");
    return v;
  }

  static long long to_int(const std::string& key, const std::string& s) {
    std::size_t used = 0;
    long long v = 0;
    try {
      v = std::stoll(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != s.size() || s.empty()) throw ConfigError("config key '" + key + "': '" + s + "' is not an integer");
    return v;
  }
};

}  // namespace ntd
