#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "support.hpp"
#include "tvae/errors.hpp"
#include "tvae/failure_forge.hpp"

namespace tvae {
namespace {

// Chi-square survival function for 4 degrees of freedom, in closed form.
double chi2_sf_df4(double x) { return std::exp(-x / 2.0) * (1.0 + x / 2.0); }

TEST(Forge, SampleModeFollowsDefaultWeights) {
  FailureWeights w;
  Rng rng(12345);
  std::array<int, kFailureModeCount> counts{};
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const FailureMode m = sample_mode(w, rng);
    for (std::size_t k = 0; k < kFailureModeCount; ++k)
      if (kAllFailureModes[k] == m) ++counts[k];
  }
  double chi2 = 0.0;
  for (std::size_t k = 0; k < kFailureModeCount; ++k) {
    const double e = n * w.w[k];
    chi2 += (counts[k] - e) * (counts[k] - e) / e;
  }
  EXPECT_GT(chi2_sf_df4(chi2), 0.001) << "chi2=" << chi2;
}

TEST(Forge, DegenerateWeights) {
  FailureWeights w;
  w.w = {1, 0, 0, 0, 0};
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(sample_mode(w, rng), FailureMode::CoordinateOffset);
}

TEST(Forge, SameSeedSameDraws) {
  Rng a(5), b(5);
  for (int i = 0; i < 200; ++i) ASSERT_EQ(sample_mode({}, a), sample_mode({}, b));
}

TEST(Forge, WeightValidation) {
  FailureWeights w;
  w.w = {0.5, 0.5, 0.5, 0, 0};
  EXPECT_THROW(w.validate(), std::invalid_argument);
  w.w = {-0.1, 0.6, 0.5, 0, 0};
  EXPECT_THROW(w.validate(), std::invalid_argument);
}

TEST(Forge, CoordinateOffsetLeavesBox) {
  const auto gt = ActionRecord::click({0.5, 0.5});
  const Box box{0.45, 0.45, 0.55, 0.55};
  Rng rng(3);
  for (int i = 0; i < 500; ++i) {
    const auto c = corrupt_action(gt, box, FailureMode::CoordinateOffset, rng);
    ASSERT_EQ(c.kind, ActionKind::Click);
    ASSERT_FALSE(box.contains(*c.coordinate));
    ASSERT_FALSE(match_action(c, gt, box, MatchConfig{}));
  }
}

TEST(Forge, ActionTypeErrorClickBecomesLongPress) {
  Rng rng(3);
  const auto c = corrupt_action(ActionRecord::click({0.3, 0.4}), std::nullopt, FailureMode::ActionTypeError, rng);
  EXPECT_EQ(c, ActionRecord::long_press({0.3, 0.4}));
}

TEST(Forge, RelatedKinds) {
  Rng rng(3);
  EXPECT_EQ(corrupt_action(ActionRecord::scroll(Direction::Up), std::nullopt, FailureMode::ActionTypeError, rng).kind,
            ActionKind::Click);
  EXPECT_EQ(corrupt_action(ActionRecord::input_text("a"), std::nullopt, FailureMode::ActionTypeError, rng).kind,
            ActionKind::Click);
  EXPECT_EQ(corrupt_action(ActionRecord::wait(1), std::nullopt, FailureMode::ActionTypeError, rng).kind,
            ActionKind::Click);
  EXPECT_THROW(corrupt_action(ActionRecord::navigate_back(), std::nullopt, FailureMode::ActionTypeError, rng),
               ModeInapplicable);
}

TEST(Forge, InapplicableModes) {
  Rng rng(3);
  EXPECT_THROW(corrupt_action(ActionRecord::navigate_back(), std::nullopt, FailureMode::CoordinateOffset, rng),
               ModeInapplicable);
  EXPECT_THROW(corrupt_action(ActionRecord::scroll(Direction::Up), std::nullopt, FailureMode::TargetMisidentification,
                              rng),
               ModeInapplicable);
  EXPECT_THROW(corrupt_action(ActionRecord::wait(1), std::nullopt, FailureMode::TimingError, rng), ModeInapplicable);
  // draw_corruption redraws until something applies
  for (int i = 0; i < 200; ++i) {
    const auto c = draw_corruption(ActionRecord::navigate_back(), std::nullopt, rng);
    ASSERT_TRUE(c.mode == FailureMode::TimingError || c.mode == FailureMode::NullClick);
  }
}

TEST(Forge, CorruptionsNeverMatchGroundTruth) {
  const auto ds = testing::make_dataset(40, 1, 8, 21);
  Rng rng(99);
  const MatchConfig match;
  for (FailureMode mode : kAllFailureModes) {
    int produced = 0;
    for (int i = 0; i < 10000; ++i) {
      const auto& t = ds[rng.index(ds.size())];
      const auto& s = t.steps[rng.index(t.steps.size())];
      try {
        const auto c = corrupt_action(s.gt_action, s.gt_bbox, mode, rng);
        ASSERT_FALSE(shape_problem(c));
        ASSERT_FALSE(match_action(c, s.gt_action, s.gt_bbox, match))
            << to_string(mode) << ": " << describe(c) << " vs " << describe(s.gt_action);
        ++produced;
      } catch (const ModeInapplicable&) {
      }
    }
    EXPECT_GT(produced, 0) << to_string(mode);
  }
}

TEST(Forge, SftCounts) {
  const auto t = testing::make_trajectory("t", 10, 3);
  const std::vector<TrajectoryRecord> ds{t};
  const auto samples = build_sft_dataset(ds, 0.3, 7);
  std::size_t a = 0, b = 0;
  for (const auto& s : samples) (s.sample_type == SampleType::TypeA ? a : b)++;
  EXPECT_EQ(a, 10u);
  EXPECT_EQ(b, 3u);
  for (const auto& s : samples) {
    if (s.sample_type != SampleType::TypeB) continue;
    EXPECT_EQ(s.target_verification, Verification::NoChange);
    ASSERT_FALSE(s.history.empty());
    EXPECT_FALSE(match_action(s.history.back().action, s.target_action, s.target_bbox, MatchConfig{}));
    EXPECT_EQ(s.history.size(), s.step + 1);
  }
  const auto only_a = build_sft_dataset(ds, 0.0, 7);
  EXPECT_EQ(only_a.size(), 10u);
}

TEST(Forge, SampleJsonRoundTrip) {
  const auto ds = testing::make_dataset(5, 1, 5, 8);
  for (const auto& s : build_sft_dataset(ds, 0.5, 1)) EXPECT_EQ(sample_from_json(sample_to_json(s)), s);
  for (const auto& c : build_robustness_bench(ds, 2, 1)) EXPECT_EQ(failure_case_from_json(failure_case_to_json(c)), c);
}

TEST(Forge, BenchPicksDistinctSteps) {
  const std::vector<TrajectoryRecord> ds{testing::make_trajectory("t", 4, 3)};
  const auto cases = build_robustness_bench(ds, 2, 11);
  ASSERT_EQ(cases.size(), 2u);
  EXPECT_NE(cases[0].step, cases[1].step);
  for (const auto& c : cases) {
    EXPECT_EQ(c.screen_ref, ds[0].steps[c.step].screen_ref);
    EXPECT_EQ(c.gt_recovery, ds[0].steps[c.step].gt_action);
    EXPECT_EQ(c.history.back().action, c.erroneous);
    EXPECT_EQ(c.history.size(), c.step + 1);
  }
  EXPECT_EQ(build_robustness_bench(ds, 9, 11).size(), 4u);
}

TEST(Forge, BenchIsDeterministic) {
  const auto ds = testing::make_dataset(10, 1, 6, 8);
  const auto a = build_robustness_bench(ds, 2, 7);
  const auto b = build_robustness_bench(ds, 2, 7);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, build_robustness_bench(ds, 2, 8));
}

TEST(Forge, EmptyDatasetRejected) {
  EXPECT_THROW(build_sft_dataset({}, 0.3, 1), EmptyDataset);
}

}  // namespace
}  // namespace tvae
