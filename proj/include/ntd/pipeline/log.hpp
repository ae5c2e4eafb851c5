#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "ntd/errors.hpp"

namespace ntd {

// Line-delimited JSON records. A default-constructed log discards everything.
class TrainLog {
 public:
  TrainLog() = default;
  explicit TrainLog(const std::string& path) : out_(path, std::ios::app) {
    if (!out_) throw DataError("cannot open log file " + path);
  }

  void write(const nlohmann::json& record) {
    if (out_.is_open()) {
      out_ << record.dump() << '\n';
      out_.flush();
    }
  }

 private:
  std::ofstream out_;
};

}  // namespace ntd
