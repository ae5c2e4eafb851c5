#pragma once

#include <algorithm>
#include <cmath>

#include "ntd/io/audio.hpp"

namespace ntd {

constexpr double kMetricCapDb = 99.0;

struct EvalMetrics {
  double snr_db = 0;
  double si_snr_db = 0;
};

namespace detail {

inline double ratio_db(double signal, double noise) {
  if (noise <= 0) return kMetricCapDb;
  return std::min(kMetricCapDb, 10.0 * std::log10(signal / noise));
}

}  // namespace detail

// Both metrics compare the first min(len) samples.
inline EvalMetrics eval_metrics(const AudioBuffer& reference, const AudioBuffer& candidate) {
  const std::size_t n = std::min(reference.size(), candidate.size());
  double rr = 0, rc = 0;
  for (std::size_t i = 0; i < n; ++i) {
    rr += double(reference.samples[i]) * reference.samples[i];
    rc += double(reference.samples[i]) * candidate.samples[i];
  }
  if (rr <= 0) throw DataError("eval_metrics: reference has zero energy");
  const double alpha = rc / rr;
  double err = 0, target = 0, resid = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = reference.samples[i], c = candidate.samples[i];
    err += (r - c) * (r - c);
    target += alpha * r * alpha * r;
    resid += (c - alpha * r) * (c - alpha * r);
  }
  EvalMetrics m;
  m.snr_db = detail::ratio_db(rr, err);
  m.si_snr_db = target > 0 ? detail::ratio_db(target, resid) : -kMetricCapDb;
  return m;
}

}  // namespace ntd
