#include <gtest/gtest.h>

#include <chrono>
#include <cstdlib>

#include "adjfree/subprocess.hpp"
#include "test_util.hpp"

using namespace adjfree;

namespace {

std::string stub(const std::string& args) { return std::string(STUB_CLASSIFIER) + " " + args; }

SubprocessOptions fast_timeout() {
  SubprocessOptions o;
  o.timeout = std::chrono::milliseconds(500);
  return o;
}

const Waveform kClip = testkit::random_waveform(800, 8000, 1, 0.3);

}  // namespace

TEST(ParseReply, AcceptsAndRenormalizesWithinBand) {
  const auto r = parse_reply(R"({"id": 4, "confidences": {"a": 0.7004, "b": 0.3}})", 4, 1e-3);
  EXPECT_NEAR(r.confidence_of("a") + r.confidence_of("b"), 1.0, 1e-12);
  EXPECT_NEAR(r.confidence_of("a"), 0.7004 / 1.0004, 1e-12);
  EXPECT_EQ(r.predicted, "a");
}

TEST(ParseReply, DistinctProtocolViolations) {
  EXPECT_THROW(parse_reply("nope", 1, 1e-3), ProtocolError);
  EXPECT_THROW(parse_reply(R"({"confidences": {"a": 1}})", 1, 1e-3), ProtocolError);
  EXPECT_THROW(parse_reply(R"({"id": 2, "confidences": {"a": 1}})", 1, 1e-3), ProtocolError);
  EXPECT_THROW(parse_reply(R"({"id": 1, "confidences": {"a": 0.5, "b": 0.6}})", 1, 1e-3), ProtocolError);
  EXPECT_THROW(parse_reply(R"({"id": 1, "confidences": {"a": "x"}})", 1, 1e-3), ProtocolError);
  EXPECT_THROW(parse_reply(R"({"id": 1})", 1, 1e-3), ProtocolError);
}

TEST(SubprocessClassifier, EchoesFixedConfidences) {
  SubprocessClassifier c(stub("fixed left=0.125 right=0.875"));
  for (int i = 0; i < 3; ++i) {
    const auto r = c.classify(kClip);
    EXPECT_EQ(r.predicted, "right");
    EXPECT_DOUBLE_EQ(r.confidence_of("left"), 0.125);
  }
}

TEST(SubprocessClassifier, MalformedReply) {
  SubprocessClassifier c(stub("malformed"), fast_timeout());
  EXPECT_THROW(c.classify(kClip), ProtocolError);
}

TEST(SubprocessClassifier, BadSumRejected) {
  SubprocessClassifier c(stub("badsum"), fast_timeout());
  EXPECT_THROW(c.classify(kClip), ProtocolError);
}

TEST(SubprocessClassifier, MismatchedIdRejected) {
  SubprocessClassifier c(stub("wrongid"), fast_timeout());
  EXPECT_THROW(c.classify(kClip), ProtocolError);
}

TEST(SubprocessClassifier, TimeoutIsDistinct) {
  SubprocessClassifier c(stub("sleep"), fast_timeout());
  const auto t0 = std::chrono::steady_clock::now();
  EXPECT_THROW(c.classify(kClip), TimeoutError);
  EXPECT_LT(std::chrono::steady_clock::now() - t0, std::chrono::seconds(5));
}

TEST(SubprocessClassifier, ChildExitIsProcessError) {
  SubprocessClassifier c(stub("exit"), fast_timeout());
  EXPECT_THROW(c.classify(kClip), ProcessError);
  SubprocessClassifier missing("/nonexistent/classifier-binary", fast_timeout());
  EXPECT_THROW(missing.classify(kClip), ProcessError);
}

TEST(SubprocessClassifier, UsesTmpdirAndCleansUp) {
  const auto dir = testkit::temp_dir("subprocess_tmp");
  SubprocessOptions o;
  o.tmpdir = dir;
  SubprocessClassifier c(stub("fixed"), o);
  c.classify(kClip);
  EXPECT_TRUE(std::filesystem::is_empty(dir));
}

TEST(SubprocessClassifier, PoolServesConcurrentRequests) {
  SubprocessOptions o;
  o.pool_size = 3;
  SubprocessClassifier c(stub("energy"), o);
  std::vector<std::thread> ts;
  std::atomic<int> ok{0};
  for (int i = 0; i < 6; ++i) {
    ts.emplace_back([&] {
      for (int k = 0; k < 5; ++k) {
        if (c.classify(kClip).confidences.size() == 2) ++ok;
      }
    });
  }
  for (auto& t : ts) t.join();
  EXPECT_EQ(ok.load(), 30);
}
