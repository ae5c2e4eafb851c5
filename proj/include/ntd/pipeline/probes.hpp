#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <vector>

#include "ntd/io/corpus.hpp"
#include "ntd/numcore/optim.hpp"
#include "ntd/tokenizers/semantic.hpp"

namespace ntd {

// Phone label of every frame: the phone under the frame's first sample.
inline std::vector<std::size_t> frame_phone_labels(const Utterance& u, std::size_t frames, std::size_t hop,
                                                   std::size_t phone_samples) {
  std::vector<std::size_t> out(frames);
  for (std::size_t j = 0; j < frames; ++j) out[j] = u.phones.at(std::min(u.phones.size() - 1, j * hop / phone_samples));
  return out;
}

// Multinomial logistic regression on standardized features.
class LinearProbe {
 public:
  void fit(const std::vector<std::vector<float>>& x, const std::vector<std::size_t>& y, std::size_t classes,
           std::size_t iterations = 400, double lr = 0.05) {
    if (x.empty() || x.size() != y.size()) throw DataError("probe: need one label per feature vector");
    const std::size_t n = x.size(), d = x[0].size();
    mean_.assign(d, 0);
    std_.assign(d, 0);
    for (const auto& r : x)
      for (std::size_t k = 0; k < d; ++k) mean_[k] += r[k] / n;
    for (const auto& r : x)
      for (std::size_t k = 0; k < d; ++k) std_[k] += (r[k] - mean_[k]) * (r[k] - mean_[k]) / n;
    for (auto& s : std_) s = std::sqrt(s) + 1e-8;
    Rng rng(0);
    weight_ = param_normal<double>({d, classes}, rng, 0.01);
    bias_ = param_const<double>({classes}, 0.0);
    const auto xs = standardize(x);
    AdamW<double> opt({weight_, bias_}, 1e-3);
    for (std::size_t it = 0; it < iterations; ++it) {
      opt.zero_grad();
      auto loss = cross_entropy(add_bias(matmul(xs, weight_), bias_, Axis::Rows), y);
      backward(loss);
      opt.step(lr);
    }
  }

  std::vector<std::size_t> predict(const std::vector<std::vector<float>>& x) const {
    NoGradGuard ng;
    const auto logits = add_bias(matmul(standardize(x), weight_), bias_, Axis::Rows);
    const std::size_t C = logits.dim(1);
    std::vector<std::size_t> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      const auto* row = logits.values().data() + i * C;
      out[i] = static_cast<std::size_t>(std::max_element(row, row + C) - row);
    }
    return out;
  }

  double accuracy(const std::vector<std::vector<float>>& x, const std::vector<std::size_t>& y) const {
    const auto p = predict(x);
    std::size_t ok = 0;
    for (std::size_t i = 0; i < p.size(); ++i) ok += p[i] == y[i];
    return static_cast<double>(ok) / static_cast<double>(p.size());
  }

 private:
  Tensor<double> standardize(const std::vector<std::vector<float>>& x) const {
    const std::size_t d = mean_.size();
    std::vector<double> v(x.size() * d);
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (x[i].size() != d) throw ShapeError("probe: feature width changed");
      for (std::size_t k = 0; k < d; ++k) v[i * d + k] = (x[i][k] - mean_[k]) / std_[k];
    }
    return Tensor<double>({x.size(), d}, std::move(v));
  }

  std::vector<double> mean_, std_;
  Tensor<double> weight_, bias_;
};

// Held-out per-frame phone accuracy of a linear probe on semantic features.
template <typename T>
double semantic_probe_accuracy(const SemanticTokenizer<T>& tok, const std::vector<Utterance>& train,
                               const std::vector<Utterance>& test, std::size_t phone_samples) {
  auto collect = [&](const std::vector<Utterance>& data, std::vector<std::vector<float>>& x, std::vector<std::size_t>& y) {
    for (const auto& u : data) {
      const auto f = tok.encode(u.audio);
      const auto lab = frame_phone_labels(u, f.size(), tok.config().hop(), phone_samples);
      x.insert(x.end(), f.begin(), f.end());
      y.insert(y.end(), lab.begin(), lab.end());
    }
  };
  std::vector<std::vector<float>> xa, xb;
  std::vector<std::size_t> ya, yb;
  collect(train, xa, ya);
  collect(test, xb, yb);
  LinearProbe probe;
  probe.fit(xa, ya, vocab::kNumPhones);
  return probe.accuracy(xb, yb);
}

// Pitch-based speaker classifier, independent of every trained component:
// mean normalized autocorrelation over voiced frames, nearest class centroid.
class SpeakerClassifier {
 public:
  static constexpr std::size_t kFrame = 256, kHop = 64, kMinLag = 20, kMaxLag = 100;

  static std::vector<double> features(const AudioBuffer& a) {
    std::vector<std::vector<double>> frames;
    std::vector<double> energy;
    for (std::size_t s = 0; s + kFrame <= a.size(); s += kHop) {
      std::vector<double> f(a.samples.begin() + s, a.samples.begin() + s + kFrame);
      double m = 0;
      for (double v : f) m += v / kFrame;
      double e = 0;
      for (auto& v : f) {
        v -= m;
        e += v * v;
      }
      frames.push_back(std::move(f));
      energy.push_back(e);
    }
    std::vector<double> out(kMaxLag - kMinLag + 1, 0.0);
    if (frames.empty()) return out;
    const double emax = *std::max_element(energy.begin(), energy.end());
    std::size_t used = 0;
    for (std::size_t i = 0; i < frames.size(); ++i) {
      if (energy[i] <= 0.2 * emax) continue;
      const auto& f = frames[i];
      for (std::size_t lag = kMinLag; lag <= kMaxLag; ++lag) {
        double xy = 0, xx = 0, yy = 0;
        for (std::size_t k = 0; k + lag < kFrame; ++k) {
          xy += f[k] * f[k + lag];
          xx += f[k] * f[k];
          yy += f[k + lag] * f[k + lag];
        }
        out[lag - kMinLag] += xy / std::sqrt(xx * yy + 1e-9);
      }
      ++used;
    }
    if (used)
      for (auto& v : out) v /= static_cast<double>(used);
    return out;
  }

  void fit(const std::vector<Utterance>& data) {
    centroids_.clear();
    std::map<int, std::size_t> counts;
    for (const auto& u : data) {
      const auto f = features(u.audio);
      auto& c = centroids_[u.speaker_id];
      if (c.empty()) c.assign(f.size(), 0.0);
      for (std::size_t k = 0; k < f.size(); ++k) c[k] += f[k];
      ++counts[u.speaker_id];
    }
    for (auto& [id, c] : centroids_)
      for (auto& v : c) v /= static_cast<double>(counts[id]);
  }

  int classify(const AudioBuffer& a) const {
    if (centroids_.empty()) throw ContractError("speaker classifier used before fit");
    const auto f = features(a);
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (const auto& [id, c] : centroids_) {
      double d = 0;
      for (std::size_t k = 0; k < f.size(); ++k) d += (f[k] - c[k]) * (f[k] - c[k]);
      if (d < best_d) {
        best_d = d;
        best = id;
      }
    }
    return best;
  }

 private:
  std::map<int, std::vector<double>> centroids_;
};

}  // namespace ntd
