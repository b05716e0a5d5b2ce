#pragma once

// Objective evaluation of a perturbation: mean and spread of the correct-class
// confidence over playback lags, plus MFCC distortion.

#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "adjfree/audio.hpp"
#include "adjfree/classifier.hpp"
#include "adjfree/error.hpp"
#include "adjfree/features.hpp"

namespace adjfree {

inline constexpr double kDefaultBound = 0.10;
inline constexpr double kDefaultTmax = 0.5;
inline constexpr std::size_t kDefaultLagCount = 9;
inline constexpr double kAdjustFreeThreshold = 0.49;

/// Per-sample perturbation restricted to the box [-bound, bound].
struct Genome {
  std::vector<double> rho;
  double bound = kDefaultBound;

  static Genome zeros(std::size_t n, double bound = kDefaultBound) { return {std::vector<double>(n, 0.0), bound}; }

  std::size_t size() const noexcept { return rho.size(); }

  bool in_box() const noexcept {
    for (double v : rho) {
      if (!(std::abs(v) <= bound)) return false;
    }
    return true;
  }

  Waveform as_waveform(int sample_rate) const { return Waveform(rho, sample_rate); }

  friend bool operator==(const Genome&, const Genome&) = default;
};

/// (f1, f2, f3), all minimized.
struct ObjectiveVector {
  double f1 = 0.0;  // mean correct-class confidence over lags
  double f2 = 0.0;  // population std of that confidence
  double f3 = 0.0;  // MFCC distance between S + rho and S

  double operator[](std::size_t i) const { return i == 0 ? f1 : i == 1 ? f2 : f3; }
  double& operator[](std::size_t i) { return i == 0 ? f1 : i == 1 ? f2 : f3; }

  friend bool operator==(const ObjectiveVector&, const ObjectiveVector&) = default;
};

/// Which of f1, f2, f3 the optimizer sees.
enum class ObjectiveSet { kF1F3, kF1F2F3 };

inline std::vector<std::size_t> active_objectives(ObjectiveSet set) {
  return set == ObjectiveSet::kF1F3 ? std::vector<std::size_t>{0, 2} : std::vector<std::size_t>{0, 1, 2};
}

inline std::string to_string(ObjectiveSet set) { return set == ObjectiveSet::kF1F3 ? "f1f3" : "f1f2f3"; }

inline ObjectiveSet parse_objective_set(const std::string& s) {
  if (s == "f1f3") return ObjectiveSet::kF1F3;
  if (s == "f1f2f3") return ObjectiveSet::kF1F2F3;
  throw InvalidArgument("unknown objective set '" + s + "' (expected f1f3 or f1f2f3)");
}

/// n evenly spaced lags from -t_max to t_max inclusive; n must be odd and >= 3.
inline LagSchedule default_lag_schedule(double t_max = kDefaultTmax, std::size_t n = kDefaultLagCount) {
  if (n < 3 || n % 2 == 0) throw InvalidArgument("lag count must be odd and at least 3");
  const std::size_t half = n / 2;
  std::vector<double> lags(n);
  for (std::size_t i = 0; i < half; ++i) {
    const double l = t_max * static_cast<double>(half - i) / static_cast<double>(half);
    lags[i] = -l;
    lags[n - 1 - i] = l;
  }
  lags[half] = 0.0;
  return LagSchedule(std::move(lags), t_max);
}

/// Fixed grid (deterministic objectives) or fresh uniform lags per evaluation.
enum class LagMode { kGrid, kRandom };

struct EvalOptions {
  LagMode lag_mode = LagMode::kGrid;
  FeatureNorm f3_norm = FeatureNorm::kL2;
};

struct LagPoint {
  double lag = 0.0;
  double confidence = 0.0;
};

struct AdjustFreeReport {
  bool adjust_free = false;
  double max_confidence = 0.0;
  std::vector<LagPoint> curve;
};

// Accumulated relative to the first element so that a constant vector has an exact mean.
inline double mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x - v.front();
  return v.front() + s / static_cast<double>(v.size());
}

/// Divide-by-n standard deviation.
inline double population_stddev(const std::vector<double>& v) {
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

/// Everything needed to score a perturbation against one target utterance.
/// The correct label is whatever the model predicts for the clean target.
class EvalContext {
 public:
  EvalContext(Waveform target, Classifier& model, LagSchedule schedule, MfccConfig mfcc_cfg = {},
              EvalOptions options = {})
      : target_(std::move(target)),
        model_(&model),
        schedule_(std::move(schedule)),
        options_(options),
        extractor_(mfcc_cfg, target_.sample_rate) {
    if (schedule_.t_max() > target_.duration()) {
      throw InvalidArgument("lag schedule t_max exceeds target duration");
    }
    const ClassificationResult clean = model_->classify(target_);
    correct_label_ = clean.predicted;
    clean_confidence_ = clean.confidence_of(correct_label_);
    clean_features_ = extractor_.compute(target_);
  }

  EvalContext(const EvalContext&) = delete;
  EvalContext& operator=(const EvalContext&) = delete;

  const Waveform& target() const noexcept { return target_; }
  const std::string& correct_label() const noexcept { return correct_label_; }
  double clean_confidence() const noexcept { return clean_confidence_; }
  const LagSchedule& schedule() const noexcept { return schedule_; }
  const EvalOptions& options() const noexcept { return options_; }
  Classifier& model() const noexcept { return *model_; }
  std::size_t dimension() const noexcept { return target_.size(); }

  /// Classifier queries spent inside evaluate().
  std::uint64_t queries() const noexcept { return queries_.load(); }
  /// Classifier queries spent on dense-lag verification curves.
  std::uint64_t verification_queries() const noexcept { return verification_queries_.load(); }
  void set_queries(std::uint64_t q) noexcept { queries_.store(q); }

  /// Correct-class confidence of S + shift(rho, lag).
  double confidence_at(const Genome& g, double lag) const {
    check(g);
    const Waveform shifted = shift_circular(g.as_waveform(target_.sample_rate), lag);
    return model_->classify(mix_clipped(target_, shifted)).confidence_of(correct_label_);
  }

  /// `lag_seed` only matters in random-lag mode.
  ObjectiveVector evaluate(const Genome& g, std::uint64_t lag_seed = 0) const {
    check(g);
    std::vector<double> lags = schedule_.lags();
    if (options_.lag_mode == LagMode::kRandom) {
      std::mt19937_64 rng(lag_seed);
      std::uniform_real_distribution<double> u(-schedule_.t_max(), schedule_.t_max());
      for (double& l : lags) l = u(rng);
    }
    const Waveform rho = g.as_waveform(target_.sample_rate);
    std::vector<double> conf(lags.size());
    for (std::size_t i = 0; i < lags.size(); ++i) {
      conf[i] = model_->classify(mix_clipped(target_, shift_circular(rho, lags[i]))).confidence_of(correct_label_);
      queries_.fetch_add(1);
    }
    ObjectiveVector out;
    out.f1 = mean(conf);
    out.f2 = population_stddev(conf);
    out.f3 = feature_distance(extractor_.compute(mix_clipped(target_, rho)), clean_features_, options_.f3_norm);
    return out;
  }

  /// Confidence curve over a dense symmetric grid; adjust-free iff every
  /// point is strictly below `threshold`.
  AdjustFreeReport verify(const Genome& g, std::size_t dense_n, double threshold = kAdjustFreeThreshold) const {
    if (dense_n < schedule_.size()) throw InvalidArgument("dense grid must be at least as fine as the schedule");
    const LagSchedule dense = default_lag_schedule(schedule_.t_max(), dense_n);
    AdjustFreeReport report;
    report.adjust_free = true;
    for (double lag : dense) {
      const double c = confidence_at(g, lag);
      verification_queries_.fetch_add(1);
      report.curve.push_back({lag, c});
      report.max_confidence = std::max(report.max_confidence, c);
      if (!(c < threshold)) report.adjust_free = false;
    }
    return report;
  }

 private:
  void check(const Genome& g) const {
    if (g.size() != target_.size()) throw InvalidArgument("genome length differs from target length");
  }

  Waveform target_;
  Classifier* model_;
  LagSchedule schedule_;
  EvalOptions options_;
  MfccExtractor extractor_;
  FeatureMatrix clean_features_;
  std::string correct_label_;
  double clean_confidence_ = 0.0;
  mutable std::atomic<std::uint64_t> queries_{0};
  mutable std::atomic<std::uint64_t> verification_queries_{0};
};

inline ObjectiveVector evaluate(const Genome& g, const EvalContext& ctx) { return ctx.evaluate(g); }

inline AdjustFreeReport is_adjust_free(const Genome& g, const EvalContext& ctx, std::size_t dense_n,
                                       double threshold = kAdjustFreeThreshold) {
  return ctx.verify(g, dense_n, threshold);
}

}  // namespace adjfree
