#include <gtest/gtest.h>

#include "adjfree/report.hpp"
#include "test_util.hpp"

using namespace adjfree;

namespace {

FrontEntry entry(double f1, double f2, double f3, std::optional<double> dense = std::nullopt) {
  return {{f1, f2, f3}, std::nullopt, dense};
}

RunSummary summary(std::string target, std::vector<FrontEntry> e, std::uint64_t q = 100) {
  return {"run", std::move(target), std::move(e), {}, q};
}

}  // namespace

TEST(Select, SingleEntryUnderEveryStrategy) {
  const std::vector<ObjectiveVector> one{{0.3, 0.1, 2.0}};
  for (auto s : {SelectStrategy::kMinF1, SelectStrategy::kMinF1PlusF2, SelectStrategy::kKnee}) {
    EXPECT_EQ(select_entry(one, s), 0u);
  }
  EXPECT_THROW(select_entry({}, SelectStrategy::kKnee), InvalidArgument);
}

TEST(Select, MinF1AndMinSum) {
  const std::vector<ObjectiveVector> pts{{0.5, 0.0, 1.0}, {0.2, 0.4, 1.0}};
  EXPECT_EQ(select_entry(pts, SelectStrategy::kMinF1), 1u);
  EXPECT_EQ(select_entry(pts, SelectStrategy::kMinF1PlusF2), 0u);
}

TEST(Select, KneeOfCollinearPointsIsInterior) {
  const std::vector<ObjectiveVector> line{{0.0, 1.0, 0}, {1.0, 0.0, 0}, {0.5, 0.5, 0}};
  EXPECT_EQ(select_entry(line, SelectStrategy::kKnee), 2u);
}

TEST(Select, KneeIsFarthestFromChord) {
  // Chord from (0, 1) to (1, 0); distances |x + y - 1| / sqrt(2).
  const std::vector<ObjectiveVector> pts{{0.0, 1.0, 0}, {0.3, 0.3, 0}, {1.0, 0.0, 0}, {0.1, 0.6, 0}};
  EXPECT_EQ(select_entry(pts, SelectStrategy::kKnee), 1u);
  const auto near = knee_neighbors(pts, 2);
  ASSERT_EQ(near.size(), 2u);
  EXPECT_EQ(near[0], 1u);
  EXPECT_EQ(near[1], 3u);
  EXPECT_EQ(knee_neighbors(pts, 10).size(), 4u);
}

TEST(Project, AxesAndTranspose) {
  const std::vector<ObjectiveVector> pts{{0.3, 0.1, 2.0}, {0.4, 0.2, 1.0}};
  const auto p = project_front({pts[0]}, "f1", "f2");
  ASSERT_EQ(p.size(), 1u);
  EXPECT_EQ(p[0], std::make_pair(0.3, 0.1));
  const auto a = project_front(pts, "f1", "f3"), b = project_front(pts, "f3", "f1");
  ASSERT_EQ(a.size(), 2u);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], std::make_pair(b[i].second, b[i].first));
  EXPECT_THROW(project_front(pts, "f1", "f9"), InvalidArgument);
}

TEST(CompareAblation, IdenticalRunsGiveIdenticalRows) {
  const auto r = summary("t", {entry(0.31, 0.1, 1, 0.3), entry(0.6, 0.05, 0.5, 0.7)});
  const auto t = compare_ablation(r, r, 0.49);
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_FALSE(t.budget_mismatch);
  for (const auto& row : t.rows) {
    EXPECT_EQ(row.with_std.objectives, row.without_std.objectives);
    EXPECT_EQ(row.with_std_passes, row.without_std_passes);
    EXPECT_FALSE(row.finding);
  }
}

TEST(CompareAblation, BinRuleAndFinding) {
  EXPECT_EQ(f1_bin(0.30, 0.05), f1_bin(0.34, 0.05));
  EXPECT_NE(f1_bin(0.34, 0.05), f1_bin(0.35, 0.05));
  const auto with_std = summary("t", {entry(0.30, 0.02, 1.0, 0.40)});
  const auto without = summary("t", {entry(0.34, 0.20, 1.0, 0.80)}, 120);
  const auto t = compare_ablation(with_std, without, 0.49);
  ASSERT_EQ(t.rows.size(), 1u);
  EXPECT_TRUE(t.rows[0].with_std_passes);
  EXPECT_FALSE(t.rows[0].without_std_passes);
  EXPECT_TRUE(t.rows[0].finding);
  EXPECT_TRUE(t.budget_mismatch);
  EXPECT_NE(comparison_csv(t).find("\n"), std::string::npos);
}

TEST(Tally, Fractions) {
  std::vector<RunSummary> runs;
  for (int i = 0; i < 10; ++i) {
    runs.push_back(summary("target" + std::to_string(i), {entry(0.2, 0.1, 1.0, i < 6 ? 0.3 : 0.6)}));
  }
  const auto t = tally_adjust_free(runs, 0.49);
  EXPECT_EQ(t.passes, 6u);
  EXPECT_EQ(t.targets, 10u);
  EXPECT_DOUBLE_EQ(t.fraction, 0.6);

  const auto all = tally_adjust_free({summary("a", {entry(0, 0, 0, 0.1)}), summary("b", {entry(0, 0, 0, 0.2)})}, 0.49);
  EXPECT_DOUBLE_EQ(all.fraction, 1.0);
  const auto none = tally_adjust_free({summary("a", {})}, 0.49);
  EXPECT_EQ(none.passes, 0u);
  EXPECT_THROW(tally_adjust_free({}, 0.49), InvalidArgument);
}

TEST(FrontJson, RoundTripsSchema) {
  Front f;
  f.queries = 1234;
  f.config = {{"seed", 3}};
  f.entries.push_back({{0.1, 0.2, 0.3}, std::string("perturbation_000.wav"), 0.4});
  f.entries.push_back({{0.5, 0.0, 0.1}, std::nullopt, std::nullopt});
  const auto j = front_to_json(f);
  EXPECT_TRUE(j.at("entries")[1].at("wav").is_null());
  const auto back = front_from_json(nlohmann::json::parse(j.dump()));
  ASSERT_EQ(back.entries.size(), 2u);
  EXPECT_EQ(back.entries[0].objectives, f.entries[0].objectives);
  EXPECT_EQ(*back.entries[0].wav, "perturbation_000.wav");
  EXPECT_EQ(back.queries, 1234u);
  EXPECT_THROW(front_from_json(nlohmann::json{{"entries", 3}}), InvalidArgument);
}

TEST(Csv, HistoryAndCurveHeaders) {
  GenerationStats h;
  h.generation = 4;
  const auto csv = history_csv({h});
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "generation,queries,best_f1,mean_f1,best_f2,mean_f2,best_f3,mean_f3,archive_size");
  EXPECT_EQ(curve_csv({{-0.5, 0.25}}), "lag_seconds,correct_class_confidence\n-0.5,0.25\n");
}
