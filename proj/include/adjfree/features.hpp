#pragma once

// MFCC extraction: Hamming window, power spectrum, HTK mel filterbank,
// log with floor, orthonormal DCT-II.

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <span>
#include <utility>
#include <vector>

#include "adjfree/audio.hpp"
#include "adjfree/error.hpp"

namespace adjfree {

struct MfccConfig {
  double frame_len = 0.025;     // seconds
  double frame_stride = 0.010;  // seconds
  std::size_t n_fft = 512;
  std::size_t n_mels = 40;
  std::size_t n_coeffs = 13;
  double log_floor = 1e-10;

  void validate() const {
    if (!(frame_stride > 0.0) || !(frame_stride <= frame_len)) {
      throw InvalidArgument("mfcc config: require 0 < frame_stride <= frame_len");
    }
    if (n_mels == 0 || n_coeffs == 0 || n_coeffs > n_mels) {
      throw InvalidArgument("mfcc config: require 0 < n_coeffs <= n_mels");
    }
    if (!(log_floor > 0.0)) throw InvalidArgument("mfcc config: log_floor must be positive");
    if (n_fft < 2 || (n_fft & (n_fft - 1)) != 0) {
      throw InvalidArgument("mfcc config: n_fft must be a power of two");
    }
  }

  friend bool operator==(const MfccConfig&, const MfccConfig&) = default;
};

/// Frame-major matrix of cepstral coefficients.
struct FeatureMatrix {
  std::size_t frames = 0;
  std::size_t coeffs_per_frame = 0;
  std::vector<double> values;

  FeatureMatrix() = default;
  FeatureMatrix(std::size_t f, std::size_t c) : frames(f), coeffs_per_frame(c), values(f * c, 0.0) {}
  FeatureMatrix(std::size_t f, std::size_t c, std::vector<double> v)
      : frames(f), coeffs_per_frame(c), values(std::move(v)) {
    if (values.size() != f * c) throw InvalidArgument("feature matrix: value count != frames*coeffs");
  }

  double& operator()(std::size_t f, std::size_t c) { return values[f * coeffs_per_frame + c]; }
  double operator()(std::size_t f, std::size_t c) const { return values[f * coeffs_per_frame + c]; }
  std::span<const double> frame(std::size_t f) const {
    return {values.data() + f * coeffs_per_frame, coeffs_per_frame};
  }

  friend bool operator==(const FeatureMatrix&, const FeatureMatrix&) = default;
};

/// How feature_distance aggregates the elementwise difference.
enum class FeatureNorm {
  kL2,    // Frobenius norm
  kRmse,  // Frobenius norm / sqrt(element count)
};

inline double feature_distance(const FeatureMatrix& a, const FeatureMatrix& b,
                               FeatureNorm norm = FeatureNorm::kL2) {
  if (a.frames != b.frames || a.coeffs_per_frame != b.coeffs_per_frame) {
    throw InvalidArgument("feature_distance: shape mismatch");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    const double d = a.values[i] - b.values[i];
    acc += d * d;
  }
  if (norm == FeatureNorm::kRmse && !a.values.empty()) acc /= static_cast<double>(a.values.size());
  return std::sqrt(acc);
}

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

/// Power spectrum of real frames of a fixed power-of-two length, computed with
/// a half-length complex radix-2 FFT.
class RealFft {
 public:
  explicit RealFft(std::size_t n) : n_(n), half_(n / 2) {
    if (n < 2 || (n & (n - 1)) != 0) throw InvalidArgument("RealFft: size must be a power of two");
    bitrev_.resize(half_);
    std::size_t bits = 0;
    while ((std::size_t{1} << bits) < half_) ++bits;
    for (std::size_t i = 0; i < half_; ++i) {
      std::size_t r = 0;
      for (std::size_t b = 0; b < bits; ++b) r |= ((i >> b) & 1u) << (bits - 1 - b);
      bitrev_[i] = r;
    }
    twiddle_.resize(half_ / 2 + 1);
    for (std::size_t k = 0; k < twiddle_.size(); ++k) {
      const double a = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(half_);
      twiddle_[k] = {std::cos(a), std::sin(a)};
    }
    post_.resize(half_ + 1);
    for (std::size_t k = 0; k <= half_; ++k) {
      const double a = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n_);
      post_[k] = {std::cos(a), std::sin(a)};
    }
  }

  std::size_t size() const noexcept { return n_; }
  std::size_t bins() const noexcept { return half_ + 1; }

  /// |X_k|^2 for k = 0..n/2 of the zero-padded input (input.size() <= n).
  void power_spectrum(std::span<const double> input, std::span<double> out) const {
    using cd = std::complex<double>;
    std::vector<cd> z(half_);
    auto at = [&](std::size_t i) { return i < input.size() ? input[i] : 0.0; };
    for (std::size_t m = 0; m < half_; ++m) z[bitrev_[m]] = cd(at(2 * m), at(2 * m + 1));

    // Products are spelled out: std::complex operator* takes a slow NaN-checking path.
    for (std::size_t len = 2; len <= half_; len <<= 1) {
      const std::size_t step = half_ / len, h = len / 2;
      for (std::size_t start = 0; start < half_; start += len) {
        for (std::size_t j = 0; j < h; ++j) {
          const cd w = twiddle_[j * step], v = z[start + j + h], u = z[start + j];
          const cd t(w.real() * v.real() - w.imag() * v.imag(), w.real() * v.imag() + w.imag() * v.real());
          z[start + j] = u + t;
          z[start + j + h] = u - t;
        }
      }
    }

    for (std::size_t k = 0; k <= half_; ++k) {
      const cd zk = z[k == half_ ? 0 : k];
      const cd zc = std::conj(z[k == 0 ? 0 : half_ - k]);
      const cd even = 0.5 * (zk + zc);
      const cd d = zk - zc;
      const cd odd(0.5 * d.imag(), -0.5 * d.real());
      const cd w = post_[k];
      const double re = even.real() + w.real() * odd.real() - w.imag() * odd.imag();
      const double im = even.imag() + w.real() * odd.imag() + w.imag() * odd.real();
      out[k] = re * re + im * im;
    }
  }

 private:
  std::size_t n_;
  std::size_t half_;
  std::vector<std::size_t> bitrev_;
  std::vector<std::complex<double>> twiddle_;
  std::vector<std::complex<double>> post_;
};

/// Precomputed MFCC pipeline for one configuration and sample rate.
/// compute() is const and safe to call from several threads.
class MfccExtractor {
 public:
  MfccExtractor(const MfccConfig& cfg, int sample_rate) : cfg_(cfg), rate_(sample_rate), fft_(cfg.n_fft) {
    cfg_.validate();
    if (sample_rate <= 0) throw InvalidArgument("mfcc: sample rate must be positive");
    frame_samples_ = static_cast<std::size_t>(std::lround(cfg_.frame_len * sample_rate));
    stride_samples_ = static_cast<std::size_t>(std::lround(cfg_.frame_stride * sample_rate));
    if (frame_samples_ == 0 || stride_samples_ == 0) {
      throw InvalidArgument("mfcc: frame or stride rounds to zero samples");
    }
    if (frame_samples_ > cfg_.n_fft) throw InvalidArgument("mfcc: n_fft shorter than frame");

    window_.resize(frame_samples_);
    for (std::size_t i = 0; i < frame_samples_; ++i) {
      window_[i] = frame_samples_ == 1
                       ? 1.0
                       : 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                                static_cast<double>(frame_samples_ - 1));
    }
    build_filterbank();
    dct_.resize(cfg_.n_coeffs * cfg_.n_mels);
    const double m = static_cast<double>(cfg_.n_mels);
    for (std::size_t k = 0; k < cfg_.n_coeffs; ++k) {
      const double scale = k == 0 ? std::sqrt(1.0 / m) : std::sqrt(2.0 / m);
      for (std::size_t j = 0; j < cfg_.n_mels; ++j) {
        dct_[k * cfg_.n_mels + j] =
            scale * std::cos(std::numbers::pi * static_cast<double>(k) * (static_cast<double>(j) + 0.5) / m);
      }
    }
  }

  const MfccConfig& config() const noexcept { return cfg_; }
  int sample_rate() const noexcept { return rate_; }
  std::size_t frame_samples() const noexcept { return frame_samples_; }
  std::size_t stride_samples() const noexcept { return stride_samples_; }

  std::size_t frame_count(std::size_t signal_len) const {
    if (signal_len < frame_samples_) throw InvalidArgument("mfcc: signal shorter than one frame");
    return (signal_len - frame_samples_) / stride_samples_ + 1;
  }

  /// Mel filterbank energies (before the log) for every frame.
  std::vector<std::vector<double>> mel_energies(std::span<const double> signal) const {
    const std::size_t frames = frame_count(signal.size());
    std::vector<std::vector<double>> out(frames, std::vector<double>(cfg_.n_mels));
    std::vector<double> frame(frame_samples_), power(fft_.bins());
    for (std::size_t f = 0; f < frames; ++f) {
      mel_frame(signal.subspan(f * stride_samples_, frame_samples_), frame, power, out[f]);
    }
    return out;
  }

  FeatureMatrix compute(std::span<const double> signal) const {
    const std::size_t frames = frame_count(signal.size());
    FeatureMatrix result(frames, cfg_.n_coeffs);
    std::vector<double> frame(frame_samples_), power(fft_.bins()), mel(cfg_.n_mels);
    for (std::size_t f = 0; f < frames; ++f) {
      mel_frame(signal.subspan(f * stride_samples_, frame_samples_), frame, power, mel);
      for (double& e : mel) e = std::log(std::max(e, cfg_.log_floor));
      for (std::size_t k = 0; k < cfg_.n_coeffs; ++k) {
        const double* row = dct_.data() + k * cfg_.n_mels;
        double acc = 0.0;
        for (std::size_t j = 0; j < cfg_.n_mels; ++j) acc += row[j] * mel[j];
        result(f, k) = acc;
      }
    }
    return result;
  }

  FeatureMatrix compute(const Waveform& w) const {
    if (w.sample_rate != rate_) throw InvalidArgument("mfcc: waveform rate differs from extractor rate");
    return compute(std::span<const double>(w.samples));
  }

 private:
  struct Filter {
    std::size_t first_bin = 0;
    std::vector<double> weights;
  };

  void build_filterbank() {
    const double nyquist = rate_ / 2.0;
    const double mel_hi = hz_to_mel(nyquist);
    std::vector<double> edges(cfg_.n_mels + 2);
    for (std::size_t i = 0; i < edges.size(); ++i) {
      edges[i] = mel_to_hz(mel_hi * static_cast<double>(i) / static_cast<double>(cfg_.n_mels + 1));
    }
    const double bin_hz = static_cast<double>(rate_) / static_cast<double>(cfg_.n_fft);
    filters_.resize(cfg_.n_mels);
    for (std::size_t m = 0; m < cfg_.n_mels; ++m) {
      const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
      Filter& flt = filters_[m];
      bool started = false;
      for (std::size_t k = 0; k < fft_.bins(); ++k) {
        const double f = bin_hz * static_cast<double>(k);
        double w = 0.0;
        if (f > lo && f <= mid) {
          w = (f - lo) / (mid - lo);
        } else if (f > mid && f < hi) {
          w = (hi - f) / (hi - mid);
        }
        if (w > 0.0) {
          if (!started) {
            flt.first_bin = k;
            started = true;
          }
          flt.weights.resize(k - flt.first_bin + 1, 0.0);
          flt.weights.back() = w;
        }
      }
    }
  }

  void mel_frame(std::span<const double> samples, std::vector<double>& frame, std::vector<double>& power,
                 std::vector<double>& mel) const {
    for (std::size_t i = 0; i < frame_samples_; ++i) frame[i] = samples[i] * window_[i];
    fft_.power_spectrum(frame, power);
    for (std::size_t m = 0; m < cfg_.n_mels; ++m) {
      const Filter& flt = filters_[m];
      double acc = 0.0;
      for (std::size_t j = 0; j < flt.weights.size(); ++j) acc += flt.weights[j] * power[flt.first_bin + j];
      mel[m] = acc;
    }
  }

  MfccConfig cfg_;
  int rate_;
  RealFft fft_;
  std::size_t frame_samples_ = 0;
  std::size_t stride_samples_ = 0;
  std::vector<double> window_;
  std::vector<Filter> filters_;
  std::vector<double> dct_;
};

inline FeatureMatrix mfcc(const Waveform& w, const MfccConfig& cfg = {}) {
  return MfccExtractor(cfg, w.sample_rate).compute(w);
}

}  // namespace adjfree
