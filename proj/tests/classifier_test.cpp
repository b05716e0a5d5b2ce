#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "adjfree/classifier.hpp"
#include "test_util.hpp"

using namespace adjfree;

namespace {

TemplateClassifier small_surrogate(std::uint64_t seed = 0) {
  return TemplateClassifier::from_corpus(make_synthetic_corpus(default_labels(), 0.5, 8000, seed));
}

}  // namespace

TEST(ClassificationResult, TieGoesToSmallestLabel) {
  const auto r = ClassificationResult::from_confidences({{"b", 0.5}, {"a", 0.5}});
  EXPECT_EQ(r.predicted, "a");
  EXPECT_THROW(ClassificationResult::from_confidences({{"a", 0.5}, {"b", 0.6}}), ClassifierError);
  EXPECT_THROW(r.confidence_of("zzz"), ClassifierError);
}

TEST(DistanceSoftmax, ThreeClassExample) {
  // softmax(0, -1, -2) = e^{-k} / (1 + e^{-1} + e^{-2})
  const double z = 1.0 + std::exp(-1.0) + std::exp(-2.0);
  const auto p = distance_softmax({0.0, 1.0, 2.0}, 1.0);
  EXPECT_NEAR(p[0], 1.0 / z, 1e-15);
  EXPECT_NEAR(p[1], std::exp(-1.0) / z, 1e-15);
  EXPECT_NEAR(p[2], std::exp(-2.0) / z, 1e-15);
  EXPECT_NEAR(p[0], 0.665, 5e-4);
  EXPECT_NEAR(p[1], 0.245, 5e-4);
  EXPECT_NEAR(p[2], 0.090, 5e-4);
}

TEST(DistanceSoftmax, SymmetryAndTemperatureLimit) {
  for (double v : distance_softmax({3.0, 3.0, 3.0, 3.0}, 1.0)) EXPECT_NEAR(v, 0.25, 1e-15);
  for (double v : distance_softmax({0.0, 5.0, 9.0}, 1e9)) EXPECT_NEAR(v, 1.0 / 3.0, 1e-8);
  EXPECT_THROW(distance_softmax({1.0}, 0.0), InvalidArgument);
}

TEST(TemplateClassifier, ConfidencesSumToOne) {
  auto tc = small_surrogate();
  const auto r = tc.classify(testkit::random_waveform(4000, 8000, 1, 0.5));
  double s = 0.0;
  for (const auto& [l, c] : r.confidences) s += c;
  EXPECT_NEAR(s, 1.0, 1e-12);
  EXPECT_EQ(r.confidences.size(), 10u);
}

TEST(TemplateClassifier, SourceAudioClassifiedAsOwnLabel) {
  const auto corpus = make_synthetic_corpus(default_labels(), 0.5, 8000, 0);
  auto tc = TemplateClassifier::from_corpus(corpus);
  for (const auto& [label, w] : corpus) {
    const auto r = tc.classify(w);
    EXPECT_EQ(r.predicted, label);
    EXPECT_GT(r.confidence_of(label), 1.0 / 10.0);
  }
}

TEST(TemplateClassifier, EquidistantInputGivesHalfHalfAndSmallestLabel) {
  // Two identical templates make every input equidistant.
  const FeatureMatrix t(48, 13);
  TemplateClassifier tc({"zeta", "alpha"}, {t, t}, 8000, 4000);
  const auto r = tc.classify(testkit::random_waveform(4000, 8000, 3, 0.3));
  EXPECT_DOUBLE_EQ(r.confidence_of("alpha"), 0.5);
  EXPECT_DOUBLE_EQ(r.confidence_of("zeta"), 0.5);
  EXPECT_EQ(r.predicted, "alpha");
}

TEST(TemplateClassifier, PermutingTemplatesPermutesConfidences) {
  const auto corpus = make_synthetic_corpus({"a", "b", "c"}, 0.5, 8000, 4);
  auto tc = TemplateClassifier::from_corpus(corpus);
  std::vector<std::string> labels{"c", "a", "b"};
  std::vector<FeatureMatrix> templ{tc.templates()[2], tc.templates()[0], tc.templates()[1]};
  TemplateClassifier permuted(labels, templ, 8000, 4000);
  const auto w = testkit::random_waveform(4000, 8000, 8, 0.5);
  const auto a = tc.classify(w), b = permuted.classify(w);
  for (const auto& [label, c] : a.confidences) EXPECT_NEAR(c, b.confidence_of(label), 1e-15) << label;
  EXPECT_EQ(a.predicted, b.predicted);
}

TEST(TemplateClassifier, DeterministicAndRejectsWrongShape) {
  auto tc = small_surrogate();
  const auto w = testkit::random_waveform(4000, 8000, 2, 0.5);
  EXPECT_EQ(tc.classify(w).confidences, tc.classify(w).confidences);
  EXPECT_THROW(tc.classify(testkit::random_waveform(3999, 8000, 2)), InvalidArgument);
  EXPECT_THROW(tc.classify(testkit::random_waveform(4000, 16000, 2)), InvalidArgument);
  EXPECT_THROW(TemplateClassifier({"x"}, {FeatureMatrix(1, 1)}, 8000, 400), InvalidArgument);
}

TEST(SyntheticCorpus, DeterministicSizedAndDistinct) {
  const auto a = make_synthetic_corpus(default_labels(), 1.0, 16000, 7);
  const auto b = make_synthetic_corpus(default_labels(), 1.0, 16000, 7);
  EXPECT_EQ(a, b);
  std::vector<FeatureMatrix> feats;
  for (const auto& [label, w] : a) {
    EXPECT_EQ(w.size(), 16000u);
    double peak = 0.0;
    for (double v : w.samples) peak = std::max(peak, std::abs(v));
    EXPECT_LE(peak, 0.8 + 1e-12);
    feats.push_back(mfcc(w));
  }
  for (std::size_t i = 0; i < feats.size(); ++i) {
    for (std::size_t j = i + 1; j < feats.size(); ++j) EXPECT_GT(feature_distance(feats[i], feats[j]), 0.0);
  }
  EXPECT_NE(make_synthetic_corpus(default_labels(), 1.0, 16000, 8), a);
  EXPECT_THROW(make_synthetic_corpus({"only"}, 1.0, 16000, 0), InvalidArgument);
}
