#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "ntd/errors.hpp"

namespace ntd {

// Mono PCM audio at a declared sample rate.
struct AudioBuffer {
  std::vector<float> samples;
  int sample_rate = 0;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  double duration_seconds() const {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
  }

  bool all_finite() const {
    for (float s : samples)
      if (!std::isfinite(s)) return false;
    return true;
  }
};

}  // namespace ntd
