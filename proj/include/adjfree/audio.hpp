#pragma once

// Mono PCM waveforms, 16-bit WAV I/O and the circular time-lag operator.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "adjfree/error.hpp"

namespace adjfree {

/// Normalized mono audio: samples in [-1, 1] at a positive sample rate.
struct Waveform {
  std::vector<double> samples;
  int sample_rate = 16000;

  Waveform() = default;
  Waveform(std::vector<double> s, int rate) : samples(std::move(s)), sample_rate(rate) {
    if (rate <= 0) throw InvalidArgument("sample rate must be positive");
  }

  std::size_t size() const noexcept { return samples.size(); }
  double duration() const noexcept {
    return static_cast<double>(samples.size()) / sample_rate;
  }

  friend bool operator==(const Waveform&, const Waveform&) = default;
};

/// Ordered, symmetric set of time offsets (seconds) in [-t_max, t_max]
/// containing zero exactly once.
class LagSchedule {
 public:
  LagSchedule(std::vector<double> lags, double t_max) : lags_(std::move(lags)), t_max_(t_max) {
    if (!(t_max_ >= 0.0) || !std::isfinite(t_max_)) {
      throw InvalidArgument("lag schedule: t_max must be finite and non-negative");
    }
    if (lags_.empty()) throw InvalidArgument("lag schedule: empty");
    constexpr double kTol = 1e-12;
    int zeros = 0;
    for (std::size_t i = 0; i < lags_.size(); ++i) {
      const double l = lags_[i];
      if (!std::isfinite(l) || std::abs(l) > t_max_ + kTol) {
        throw InvalidArgument("lag schedule: lag outside [-t_max, t_max]");
      }
      if (l == 0.0) ++zeros;
      if (i > 0 && !(lags_[i] > lags_[i - 1])) {
        throw InvalidArgument("lag schedule: lags must be strictly increasing");
      }
    }
    if (zeros != 1) throw InvalidArgument("lag schedule: must contain 0 exactly once");
    const std::size_t n = lags_.size();
    for (std::size_t i = 0; i < n; ++i) {
      if (std::abs(lags_[i] + lags_[n - 1 - i]) > kTol) {
        throw InvalidArgument("lag schedule: must be symmetric about 0");
      }
    }
  }

  const std::vector<double>& lags() const noexcept { return lags_; }
  double t_max() const noexcept { return t_max_; }
  std::size_t size() const noexcept { return lags_.size(); }
  auto begin() const noexcept { return lags_.begin(); }
  auto end() const noexcept { return lags_.end(); }

 private:
  std::vector<double> lags_;
  double t_max_;
};

namespace detail {

inline std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

inline void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFF));
}

inline void put_u16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xFF));
  out.push_back(static_cast<unsigned char>((v >> 8) & 0xFF));
}

inline void put_tag(std::vector<unsigned char>& out, const char* tag) {
  out.insert(out.end(), tag, tag + 4);
}

}  // namespace detail

/// Decodes an in-memory RIFF/WAVE image (16-bit mono PCM only).
inline Waveform decode_wav(std::span<const unsigned char> bytes) {
  using detail::read_u16;
  using detail::read_u32;
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw WavFormatError("not a RIFF/WAVE file");
  }

  bool have_fmt = false;
  std::uint16_t format_tag = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::uint32_t len = read_u32(chunk + 4);
    const std::size_t body = pos + 8;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (len < 16 || body + len > bytes.size()) throw WavFormatError("truncated fmt chunk");
      format_tag = read_u16(bytes.data() + body);
      channels = read_u16(bytes.data() + body + 2);
      rate = read_u32(bytes.data() + body + 4);
      bits = read_u16(bytes.data() + body + 14);
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      if (!have_fmt) throw WavFormatError("data chunk before fmt chunk");
      if (format_tag != 1) {
        throw UnsupportedEncoding("unsupported WAV encoding: format tag " +
                                  std::to_string(format_tag) + " is not PCM");
      }
      if (channels != 1) {
        throw UnsupportedEncoding("unsupported WAV encoding: " + std::to_string(channels) +
                                  " channels, expected mono");
      }
      if (bits != 16) {
        throw UnsupportedEncoding("unsupported WAV encoding: " + std::to_string(bits) +
                                  " bits per sample, expected 16");
      }
      if (rate == 0) throw WavFormatError("sample rate of 0 in fmt chunk");
      if (body + len > bytes.size() || len % 2 != 0) throw WavFormatError("truncated data chunk");
      std::vector<double> samples(len / 2);
      for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto raw = static_cast<std::int16_t>(read_u16(bytes.data() + body + 2 * i));
        samples[i] = static_cast<double>(raw) / 32768.0;
      }
      return Waveform(std::move(samples), static_cast<int>(rate));
    }
    // Chunks are word aligned.
    pos = body + len + (len & 1u);
  }
  throw WavFormatError(have_fmt ? "missing data chunk" : "missing fmt chunk");
}

inline Waveform read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  return decode_wav(bytes);
}

/// Encodes as 16-bit mono PCM; amplitude a becomes round(a * 32767).
inline std::vector<unsigned char> encode_wav(const Waveform& w) {
  for (double s : w.samples) {
    if (!(std::abs(s) <= 1.0)) throw InvalidArgument("write_wav: sample outside [-1, 1]");
  }
  const auto data_len = static_cast<std::uint32_t>(w.samples.size() * 2);
  std::vector<unsigned char> out;
  out.reserve(44 + data_len);
  detail::put_tag(out, "RIFF");
  detail::put_u32(out, 36 + data_len);
  detail::put_tag(out, "WAVE");
  detail::put_tag(out, "fmt ");
  detail::put_u32(out, 16);
  detail::put_u16(out, 1);
  detail::put_u16(out, 1);
  detail::put_u32(out, static_cast<std::uint32_t>(w.sample_rate));
  detail::put_u32(out, static_cast<std::uint32_t>(w.sample_rate) * 2);
  detail::put_u16(out, 2);
  detail::put_u16(out, 16);
  detail::put_tag(out, "data");
  detail::put_u32(out, data_len);
  for (double s : w.samples) {
    const double q = std::clamp(std::round(s * 32767.0), -32768.0, 32767.0);
    detail::put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
  }
  return out;
}

inline void write_wav(const Waveform& w, const std::filesystem::path& path) {
  const auto bytes = encode_wav(w);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

/// Number of whole samples a lag (seconds) rotates by.
inline long lag_to_samples(double lag, int sample_rate) {
  return std::lround(lag * sample_rate);
}

/// Rotates `p` so that output[k] = input[(k - round(lag * rate)) mod N].
/// Positive lags delay the signal; samples pushed off the end wrap to the front.
inline Waveform shift_circular(const Waveform& p, double lag) {
  if (!std::isfinite(lag) || std::abs(lag) > p.duration()) {
    throw InvalidArgument("shift_circular: |lag| exceeds waveform duration");
  }
  const auto n = static_cast<long>(p.size());
  Waveform out = p;
  if (n == 0) return out;
  long k = lag_to_samples(lag, p.sample_rate) % n;
  if (k < 0) k += n;
  std::rotate_copy(p.samples.begin(), p.samples.end() - k, p.samples.end(), out.samples.begin());
  return out;
}

/// Elementwise s + p, hard-clipped to [-1, 1].
inline Waveform mix_clipped(const Waveform& s, const Waveform& p) {
  if (s.size() != p.size()) throw InvalidArgument("mix_clipped: length mismatch");
  if (s.sample_rate != p.sample_rate) throw InvalidArgument("mix_clipped: sample rate mismatch");
  Waveform out = s;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.samples[i] = std::clamp(s.samples[i] + p.samples[i], -1.0, 1.0);
  }
  return out;
}

}  // namespace adjfree
