#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "adjfree/audio.hpp"
#include "test_util.hpp"

using namespace adjfree;

namespace {

std::vector<unsigned char> wav_with_samples(const std::vector<std::int16_t>& raw) {
  Waveform w(std::vector<double>(raw.size(), 0.0), 16000);
  auto bytes = encode_wav(w);
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const auto u = static_cast<std::uint16_t>(raw[i]);
    bytes[44 + 2 * i] = static_cast<unsigned char>(u & 0xFF);
    bytes[45 + 2 * i] = static_cast<unsigned char>(u >> 8);
  }
  return bytes;
}

}  // namespace

TEST(ReadWav, MapsInt16ByDividingBy32768) {
  const auto w = decode_wav(wav_with_samples({0, -32768, 16384}));
  EXPECT_EQ(w.sample_rate, 16000);
  ASSERT_EQ(w.size(), 3u);
  EXPECT_EQ(w.samples[0], 0.0);
  EXPECT_EQ(w.samples[1], -1.0);
  EXPECT_EQ(w.samples[2], 0.5);
}

TEST(WriteWav, FullScaleAndZero) {
  const auto bytes = encode_wav(Waveform({1.0, 0.0, -1.0}, 8000));
  auto at = [&](std::size_t i) { return static_cast<std::int16_t>(bytes[44 + 2 * i] | (bytes[45 + 2 * i] << 8)); };
  EXPECT_EQ(at(0), 32767);
  EXPECT_EQ(at(1), 0);
  EXPECT_EQ(at(2), -32767);
}

TEST(WriteWav, RejectsOutOfRangeSamples) {
  EXPECT_THROW(encode_wav(Waveform({1.5}, 8000)), InvalidArgument);
}

TEST(WavRoundTrip, ThreeSamplesThroughFile) {
  const auto dir = testkit::temp_dir("wav_rt");
  const Waveform w({0.1, -0.45, 0.5}, 16000);
  write_wav(w, dir / "a.wav");
  const Waveform r = read_wav(dir / "a.wav");
  EXPECT_EQ(r.sample_rate, 16000);
  ASSERT_EQ(r.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_LE(std::abs(r.samples[i] - w.samples[i]), 1.0 / 32768);
}

TEST(WavRoundTrip, RandomSignalsWithinOneLsb) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto w = testkit::random_waveform(257 + seed * 31, 8000 + static_cast<int>(seed), seed, 0.5);
    const auto r = decode_wav(encode_wav(w));
    ASSERT_EQ(r.size(), w.size());
    EXPECT_EQ(r.sample_rate, w.sample_rate);
    for (std::size_t i = 0; i < w.size(); ++i) ASSERT_LE(std::abs(r.samples[i] - w.samples[i]), 1.0 / 32768);
  }
}

// Encoding scales by 32767 but decoding divides by 32768, so near full scale the
// error grows to (|a| + 0.5) LSB.
TEST(WavRoundTrip, FullScaleErrorBoundedByScaleMismatch) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto w = testkit::random_waveform(311, 16000, seed, 1.0);
    const auto r = decode_wav(encode_wav(w));
    for (std::size_t i = 0; i < w.size(); ++i) {
      ASSERT_LE(std::abs(r.samples[i] - w.samples[i]), (std::abs(w.samples[i]) + 0.5) / 32768 + 1e-15);
    }
  }
}

TEST(ReadWav, ErrorsAreDistinct) {
  auto good = encode_wav(Waveform({0.0, 0.1}, 16000));

  auto not_riff = good;
  not_riff[0] = 'X';
  EXPECT_THROW(decode_wav(not_riff), WavFormatError);

  auto truncated = good;
  truncated.resize(30);
  EXPECT_THROW(decode_wav(truncated), WavFormatError);

  auto float_fmt = good;
  float_fmt[20] = 3;  // IEEE float tag
  EXPECT_THROW(decode_wav(float_fmt), UnsupportedEncoding);

  auto stereo = good;
  stereo[22] = 2;
  EXPECT_THROW(decode_wav(stereo), UnsupportedEncoding);

  auto eight_bit = good;
  eight_bit[34] = 8;
  EXPECT_THROW(decode_wav(eight_bit), UnsupportedEncoding);

  EXPECT_THROW(read_wav("/nonexistent/x.wav"), IoError);
}

TEST(ReadWav, SkipsUnknownChunks) {
  auto good = encode_wav(Waveform({0.25, -0.25}, 16000));
  std::vector<unsigned char> with_list(good.begin(), good.begin() + 36);
  const unsigned char list[] = {'L', 'I', 'S', 'T', 3, 0, 0, 0, 'a', 'b', 'c', 0};
  with_list.insert(with_list.end(), std::begin(list), std::end(list));
  with_list.insert(with_list.end(), good.begin() + 36, good.end());
  const auto w = decode_wav(with_list);
  ASSERT_EQ(w.size(), 2u);
  EXPECT_NEAR(w.samples[0], 0.25, 1.0 / 32768);
}

TEST(ShiftCircular, ZeroLagIsIdentity) {
  const auto w = testkit::random_waveform(100, 1000, 3);
  EXPECT_EQ(shift_circular(w, 0.0), w);
}

TEST(ShiftCircular, PositiveLagDelays) {
  const Waveform w({1, 2, 3, 4, 5}, 10);
  const auto s = shift_circular(w, 0.2);  // 2 samples
  EXPECT_EQ(s.samples, (std::vector<double>{4, 5, 1, 2, 3}));
  EXPECT_EQ(shift_circular(w, -0.1).samples, (std::vector<double>{2, 3, 4, 5, 1}));
}

TEST(ShiftCircular, TenthOfASecondAt16kHzIs1600Samples) {
  std::vector<double> s(16000, 0.0);
  s[0] = 0.5;
  const auto out = shift_circular(Waveform(s, 16000), 0.1);
  EXPECT_EQ(out.samples[1600], 0.5);
  EXPECT_EQ(lag_to_samples(0.1, 16000), 1600);
}

TEST(ShiftCircular, InverseAndEnergyProperties) {
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    const auto w = testkit::random_waveform(400 + seed * 7, 1000, seed);
    std::mt19937_64 rng(seed);
    const double lag = std::uniform_real_distribution<double>(-w.duration(), w.duration())(rng);
    const auto s = shift_circular(w, lag);
    EXPECT_EQ(shift_circular(s, -lag), w);
    double e0 = 0, e1 = 0;
    for (double v : w.samples) e0 += v * v;
    for (double v : s.samples) e1 += v * v;
    auto a = w.samples, b = s.samples;
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    EXPECT_EQ(a, b);  // a permutation of samples
    EXPECT_NEAR(e0, e1, 1e-12 * e0);
  }
}

TEST(ShiftCircular, RejectsLagLongerThanSignal) {
  EXPECT_THROW(shift_circular(Waveform({0, 0}, 10), 0.3), InvalidArgument);
}

TEST(MixClipped, Examples) {
  const Waveform s({0.1, -0.2}, 8000);
  EXPECT_EQ(mix_clipped(s, Waveform({0.0, 0.0}, 8000)), s);
  const auto m = mix_clipped(s, Waveform({0.2, 0.1}, 8000));
  EXPECT_NEAR(m.samples[0], 0.3, 1e-15);
  EXPECT_NEAR(m.samples[1], -0.1, 1e-15);
  EXPECT_EQ(mix_clipped(Waveform({0.9, -0.9}, 8000), Waveform({0.5, -0.5}, 8000)).samples,
            (std::vector<double>{1.0, -1.0}));
}

TEST(MixClipped, AlwaysWithinFullScale) {
  const auto a = testkit::random_waveform(1000, 8000, 1, 1.0);
  const auto b = testkit::random_waveform(1000, 8000, 2, 1.0);
  for (double v : mix_clipped(a, b).samples) ASSERT_LE(std::abs(v), 1.0);
}

TEST(MixClipped, RejectsMismatch) {
  EXPECT_THROW(mix_clipped(Waveform({0.0}, 8000), Waveform({0.0, 0.0}, 8000)), InvalidArgument);
  EXPECT_THROW(mix_clipped(Waveform({0.0}, 8000), Waveform({0.0}, 16000)), InvalidArgument);
}

TEST(LagScheduleType, EnforcesInvariants) {
  EXPECT_NO_THROW(LagSchedule({-0.5, 0.0, 0.5}, 0.5));
  EXPECT_THROW(LagSchedule({-0.5, 0.5}, 0.5), InvalidArgument);         // no zero
  EXPECT_THROW(LagSchedule({-0.5, 0.0, 0.25}, 0.5), InvalidArgument);   // asymmetric
  EXPECT_THROW(LagSchedule({0.5, 0.0, -0.5}, 0.5), InvalidArgument);    // not increasing
  EXPECT_THROW(LagSchedule({-0.75, 0.0, 0.75}, 0.5), InvalidArgument);  // beyond t_max
}
