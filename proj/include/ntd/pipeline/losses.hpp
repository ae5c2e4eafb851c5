#pragma once

#include <cmath>
#include <map>
#include <vector>

#include "ntd/numcore/ops.hpp"

namespace ntd {

namespace detail {

template <typename T>
struct DftBasis {
  Tensor<T> window, cos, sin;
};

// Hann window and real/imaginary DFT matrices, built once per size.
template <typename T>
const DftBasis<T>& dft_basis(std::size_t win) {
  thread_local std::map<std::size_t, DftBasis<T>> cache;
  auto it = cache.find(win);
  if (it != cache.end()) return it->second;
  const std::size_t bins = win / 2 + 1;
  std::vector<T> window(win), cosb(win * bins), sinb(win * bins);
  for (std::size_t n = 0; n < win; ++n) {
    window[n] = static_cast<T>(0.5 - 0.5 * std::cos(2 * M_PI * n / win));
    for (std::size_t k = 0; k < bins; ++k) {
      const double a = 2 * M_PI * static_cast<double>(n * k % win) / win;
      cosb[n * bins + k] = static_cast<T>(std::cos(a));
      sinb[n * bins + k] = static_cast<T>(-std::sin(a));
    }
  }
  DftBasis<T> b{Tensor<T>({win}, std::move(window)), Tensor<T>({win, bins}, std::move(cosb)),
                Tensor<T>({win, bins}, std::move(sinb))};
  return cache.emplace(win, std::move(b)).first->second;
}

}  // namespace detail

// Hann-windowed DFT magnitude of a flat signal: [frames x (win/2 + 1)].
template <typename T>
Tensor<T> stft_magnitude(const Tensor<T>& signal, std::size_t win, std::size_t hop) {
  const auto& basis = detail::dft_basis<T>(win);
  auto frames = mul_rows(frame_signal(signal, win, hop), basis.window);
  auto re = matmul(frames, basis.cos);
  auto im = matmul(frames, basis.sin);
  return sqrt(add_scalar(add(square(re), square(im)), T(1e-7)));
}

// Sum over resolutions of the mean squared STFT magnitude difference.
template <typename T>
Tensor<T> multi_resolution_stft_loss(const Tensor<T>& prediction, const Tensor<T>& target,
                                     const std::vector<std::size_t>& windows) {
  Tensor<T> total;
  for (auto w : windows) {
    if (target.size() < w) continue;
    auto term = mse(stft_magnitude(prediction, w, w / 4), stft_magnitude(target, w, w / 4));
    total = total.defined() ? add(total, term) : term;
  }
  return total.defined() ? total : Tensor<T>::scalar(T(0));
}

}  // namespace ntd
