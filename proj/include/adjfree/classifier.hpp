#pragma once

// Black-box classifier contract and the built-in MFCC template surrogate.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <numbers>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "adjfree/audio.hpp"
#include "adjfree/error.hpp"
#include "adjfree/features.hpp"

namespace adjfree {

/// Per-class confidences (summing to 1) and the arg-max label.
struct ClassificationResult {
  std::map<std::string, double> confidences;
  std::string predicted;

  /// Validates normalization and picks the arg-max; ties resolve to the
  /// lexicographically smallest label.
  static ClassificationResult from_confidences(std::map<std::string, double> conf, double tol = 1e-6) {
    if (conf.empty()) throw ClassifierError("classification result has no classes");
    double sum = 0.0;
    for (const auto& [label, c] : conf) {
      if (!std::isfinite(c) || c < 0.0 || c > 1.0 + tol) {
        throw ClassifierError("confidence for '" + label + "' outside [0, 1]");
      }
      sum += c;
    }
    if (std::abs(sum - 1.0) > tol) throw ClassifierError("confidences do not sum to 1");
    ClassificationResult r;
    double best = -1.0;
    for (const auto& [label, c] : conf) {
      if (c > best) {
        best = c;
        r.predicted = label;
      }
    }
    r.confidences = std::move(conf);
    return r;
  }

  double confidence_of(const std::string& label) const {
    auto it = confidences.find(label);
    if (it == confidences.end()) throw ClassifierError("classifier did not report class '" + label + "'");
    return it->second;
  }
};

/// The only thing the attack may know about its target model.
class Classifier {
 public:
  virtual ~Classifier() = default;

  virtual ClassificationResult classify(const Waveform& w) = 0;

  /// True if classify() may be called concurrently from several threads.
  virtual bool concurrent() const { return false; }
};

inline ClassificationResult classify(Classifier& model, const Waveform& w) { return model.classify(w); }

/// The ten command words of the speech-commands task.
inline std::vector<std::string> default_labels() {
  return {"down", "go", "left", "no", "off", "on", "right", "stop", "up", "yes"};
}

/// Numerically stable softmax of -d/temperature.
inline std::vector<double> distance_softmax(const std::vector<double>& distances, double temperature) {
  if (!(temperature > 0.0)) throw InvalidArgument("temperature must be positive");
  const double dmin = *std::min_element(distances.begin(), distances.end());
  std::vector<double> out(distances.size());
  double total = 0.0;
  for (std::size_t k = 0; k < distances.size(); ++k) {
    out[k] = std::exp(-(distances[k] - dmin) / temperature);
    total += out[k];
  }
  for (double& v : out) v /= total;
  return out;
}

/// Nearest-template surrogate: softmax over negative MFCC distances to one
/// reference feature matrix per class.
class TemplateClassifier final : public Classifier {
 public:
  TemplateClassifier(std::vector<std::string> labels, std::vector<FeatureMatrix> templates, int sample_rate,
                     std::size_t signal_len, MfccConfig cfg = {}, double temperature = 1.0,
                     FeatureNorm norm = FeatureNorm::kRmse)
      : labels_(std::move(labels)),
        templates_(std::move(templates)),
        temperature_(temperature),
        norm_(norm),
        signal_len_(signal_len),
        extractor_(std::make_shared<const MfccExtractor>(cfg, sample_rate)) {
    if (labels_.size() < 2) throw InvalidArgument("template classifier needs at least two labels");
    if (labels_.size() != templates_.size()) throw InvalidArgument("one template per label required");
    if (!(temperature_ > 0.0)) throw InvalidArgument("temperature must be positive");
    for (const auto& t : templates_) {
      if (t.frames != templates_[0].frames || t.coeffs_per_frame != templates_[0].coeffs_per_frame) {
        throw InvalidArgument("templates must share one shape");
      }
    }
    auto sorted = labels_;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
      throw InvalidArgument("duplicate label");
    }
  }

  /// Builds templates from one source waveform per label.
  static TemplateClassifier from_corpus(const std::map<std::string, Waveform>& corpus, MfccConfig cfg = {},
                                        double temperature = 1.0, FeatureNorm norm = FeatureNorm::kRmse) {
    if (corpus.size() < 2) throw InvalidArgument("corpus needs at least two labels");
    const Waveform& first = corpus.begin()->second;
    MfccExtractor ex(cfg, first.sample_rate);
    std::vector<std::string> labels;
    std::vector<FeatureMatrix> templates;
    for (const auto& [label, w] : corpus) {
      if (w.sample_rate != first.sample_rate || w.size() != first.size()) {
        throw InvalidArgument("corpus waveforms must share rate and length");
      }
      labels.push_back(label);
      templates.push_back(ex.compute(w));
    }
    return TemplateClassifier(std::move(labels), std::move(templates), first.sample_rate, first.size(), cfg,
                              temperature, norm);
  }

  std::vector<double> distances(const Waveform& w) const {
    if (w.sample_rate != extractor_->sample_rate() || w.size() != signal_len_) {
      throw InvalidArgument("template classifier: waveform rate/length differs from templates");
    }
    const FeatureMatrix feats = extractor_->compute(w);
    std::vector<double> d(templates_.size());
    for (std::size_t k = 0; k < templates_.size(); ++k) d[k] = feature_distance(feats, templates_[k], norm_);
    return d;
  }

  ClassificationResult surrogate_confidences(const Waveform& w) const {
    const auto p = distance_softmax(distances(w), temperature_);
    std::map<std::string, double> conf;
    for (std::size_t k = 0; k < labels_.size(); ++k) conf.emplace(labels_[k], p[k]);
    return ClassificationResult::from_confidences(std::move(conf));
  }

  ClassificationResult classify(const Waveform& w) override { return surrogate_confidences(w); }
  bool concurrent() const override { return true; }

  const std::vector<std::string>& labels() const noexcept { return labels_; }
  const std::vector<FeatureMatrix>& templates() const noexcept { return templates_; }
  double temperature() const noexcept { return temperature_; }
  FeatureNorm norm() const noexcept { return norm_; }

 private:
  std::vector<std::string> labels_;
  std::vector<FeatureMatrix> templates_;
  double temperature_;
  FeatureNorm norm_;
  std::size_t signal_len_;
  std::shared_ptr<const MfccExtractor> extractor_;
};

/// Deterministic stand-in for a spoken-command dataset: one synthetic
/// "utterance" per label (harmonic voiced segment with a formant chirp,
/// a noise burst and a quiet background), peak amplitude 0.8.
inline std::map<std::string, Waveform> make_synthetic_corpus(const std::vector<std::string>& labels,
                                                             double duration, int rate, std::uint64_t seed) {
  if (labels.size() < 2) throw InvalidArgument("synthetic corpus needs at least two labels");
  if (!(duration > 0.0) || rate <= 0) throw InvalidArgument("synthetic corpus: bad duration or rate");
  const auto n = static_cast<std::size_t>(std::lround(duration * rate));
  const double nyquist = rate / 2.0;
  std::map<std::string, Waveform> corpus;
  for (std::size_t li = 0; li < labels.size(); ++li) {
    std::seed_seq seq{seed, static_cast<std::uint64_t>(li), static_cast<std::uint64_t>(labels.size())};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> u(0.0, 1.0);

    const double f0 = 90.0 + 160.0 * u(rng);
    const double chirp_lo = 0.08 * nyquist + 0.25 * nyquist * u(rng);
    const double chirp_hi = 0.08 * nyquist + 0.6 * nyquist * u(rng);
    const double onset = 0.1 + 0.25 * u(rng);
    const double length = 0.35 + 0.3 * u(rng);
    const double burst_at = u(rng);
    const double burst_center = 0.25 * nyquist + 0.6 * nyquist * u(rng);
    const int harmonics = 3 + static_cast<int>(4 * u(rng));

    std::vector<double> s(n, 0.0);
    std::normal_distribution<double> g(0.0, 1.0);
    double chirp_phase = 0.0;
    double lp = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double t = static_cast<double>(i) / rate;
      const double pos = t / duration;
      const double rel = (pos - onset) / length;
      const double env = rel > 0.0 && rel < 1.0 ? std::sin(std::numbers::pi * rel) : 0.0;
      double voiced = 0.0;
      for (int h = 1; h <= harmonics; ++h) {
        if (f0 * h < nyquist) voiced += std::sin(2.0 * std::numbers::pi * f0 * h * t) / h;
      }
      const double chirp_f = chirp_lo + (chirp_hi - chirp_lo) * std::clamp(rel, 0.0, 1.0);
      chirp_phase += 2.0 * std::numbers::pi * chirp_f / rate;
      const double burst_env = std::exp(-std::pow((pos - burst_at) / 0.05, 2.0));
      // One-pole smoothing shapes the burst toward lower or higher bands.
      const double alpha = std::clamp(burst_center / nyquist, 0.05, 0.95);
      lp = alpha * g(rng) + (1.0 - alpha) * lp;
      s[i] = env * (0.5 * voiced + 0.4 * std::sin(chirp_phase)) + 0.5 * burst_env * lp + 0.004 * g(rng);
    }
    const double peak = std::max(1e-12, std::abs(*std::max_element(s.begin(), s.end(), [](double a, double b) {
      return std::abs(a) < std::abs(b);
    })));
    for (double& v : s) v *= 0.8 / peak;
    corpus.emplace(labels[li], Waveform(std::move(s), rate));
  }
  return corpus;
}

}  // namespace adjfree
