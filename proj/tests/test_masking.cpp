#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "freqlens/masking.hpp"

using namespace freqlens;

TEST(Counterpart, Convention) {
  EXPECT_EQ(counterpart(0, 0, 14), std::make_pair(std::size_t{13}, std::size_t{13}));
  EXPECT_EQ(counterpart(6, 7, 14), std::make_pair(std::size_t{7}, std::size_t{6}));
  EXPECT_EQ(counterpart_token(0, 14), 195u);
  EXPECT_THROW(counterpart(14, 0, 14), std::out_of_range);
}

TEST(Counterpart, InvolutionOnAllPatches) {
  for (std::size_t i = 0; i < 14; ++i)
    for (std::size_t j = 0; j < 14; ++j) {
      const auto [a, b] = counterpart(i, j, 14);
      EXPECT_EQ(counterpart(a, b, 14), std::make_pair(i, j));
      EXPECT_EQ(counterpart_token(a * 14 + b, 14), i * 14 + j);
      EXPECT_FALSE(a == i && b == j);
    }
}

TEST(SampleMask, ZeroRatioIsAllVisible) {
  Rng rng(1);
  const MaskPlan plan = sample_mask(14, 0.0, rng);
  const auto c = case_counts(plan);
  EXPECT_EQ(c[0], 0u);
  EXPECT_EQ(c[1], 0u);
  EXPECT_EQ(c[2], 196u);
}

TEST(SampleMask, CaseInvariants) {
  Rng rng(2);
  for (int t = 0; t < 200; ++t) {
    const MaskPlan plan = sample_mask(8, 0.4, rng);
    const auto counts = case_counts(plan);
    EXPECT_EQ(counts[0] + counts[1] + counts[2], 64u);
    EXPECT_EQ(counts[0] % 2, 0u);
    for (std::size_t p = 0; p < 64; ++p) {
      const bool m = plan.masked_token(p);
      const bool mc = plan.masked_token(counterpart_token(p, 8));
      const MaskCase c = plan.case_of_token(p);
      EXPECT_EQ(c == MaskCase::both_masked, m && mc);
      EXPECT_EQ(c == MaskCase::counterpart_visible, m && !mc);
      EXPECT_EQ(c == MaskCase::visible, !m);
      if (c == MaskCase::both_masked) {
        EXPECT_EQ(plan.case_of_token(counterpart_token(p, 8)), MaskCase::both_masked);
      }
    }
  }
}

TEST(SampleMask, PairTypeFrequenciesWithinThreeSigma) {
  const double r = 0.3;
  const std::size_t n = 14, trials = 10000;
  Rng rng(3);
  std::array<double, 3> pairs{};
  std::array<double, 3> patches{};
  for (std::size_t t = 0; t < trials; ++t) {
    const MaskPlan plan = sample_mask(n, r, rng);
    const auto pt = pair_type_counts(plan);
    const auto cc = case_counts(plan);
    for (int k = 0; k < 3; ++k) {
      pairs[k] += static_cast<double>(pt[k]);
      patches[k] += static_cast<double>(cc[k]);
    }
  }
  const std::array<double, 3> p{0.09, 0.42, 0.49};
  const double total_pairs = static_cast<double>(trials * n * n / 2);
  for (int k = 0; k < 3; ++k) {
    const double sigma = std::sqrt(p[k] * (1 - p[k]) / total_pairs);
    EXPECT_NEAR(pairs[k] / total_pairs, p[k], 3 * sigma) << "pair type " << k;
  }
  // mean pair counts vs E_t = N²/2 · P_t
  const auto e = expected_pair_counts(n, r);
  EXPECT_NEAR(e[0], 8.82, 1e-12);
  EXPECT_NEAR(e[1], 41.16, 1e-12);
  EXPECT_NEAR(e[2], 48.02, 1e-12);
  const double m = static_cast<double>(trials);
  EXPECT_NEAR(patches[0] / 2 / m, e[0], 3 * std::sqrt(98 * 0.09 * 0.91 / m));
  EXPECT_NEAR(patches[1] / 2 / m, e[1] / 2, 3 * std::sqrt(98 * 0.42 * 0.58 / m));
  EXPECT_NEAR((patches[2] - patches[1]) / 2 / m, e[2], 3 * std::sqrt(98 * 0.49 * 0.51 / m));
}

TEST(SampleMask, DeterministicGivenSeed) {
  Rng a(42), b(42);
  EXPECT_EQ(sample_mask(14, 0.3, a), sample_mask(14, 0.3, b));
}

TEST(SampleMask, FixedCountMasksExactly) {
  Rng rng(4);
  const MaskPlan plan = sample_mask(14, 0.3, rng, MaskSampling::fixed_count);
  std::size_t masked = 0;
  for (std::size_t p = 0; p < 196; ++p) masked += plan.masked_token(p);
  EXPECT_EQ(masked, 59u);
}

TEST(SampleMask, RejectsBadArguments) {
  Rng rng(5);
  EXPECT_THROW(sample_mask(7, 0.3, rng), std::invalid_argument);
  EXPECT_THROW(sample_mask(8, 1.0, rng), std::invalid_argument);
  EXPECT_THROW(sample_mask(8, -0.1, rng), std::invalid_argument);
}

TEST(CaseCounts, Extremes) {
  const auto all = case_counts(MaskPlan::all(6));
  EXPECT_EQ(all[0], 36u);
  EXPECT_EQ(all[1] + all[2], 0u);
  const auto none = case_counts(MaskPlan::none(6));
  EXPECT_EQ(none[2], 36u);
}

TEST(ExpectedPairCounts, SumToHalfGrid) {
  for (int k = 1; k <= 19; ++k) {
    const double r = 0.05 * k;
    const auto e = expected_pair_counts(14, r);
    EXPECT_NEAR(e[0] + e[1] + e[2], 98.0, 1e-12);
  }
}

TEST(NextRatio, UniformOverLevels) {
  RatioSchedule s;
  s.seed = 9;
  std::array<double, 3> hits{};
  const std::size_t draws = 30000;
  for (std::size_t b = 0; b < draws; ++b) {
    const double r = next_ratio(s, b);
    for (int k = 0; k < 3; ++k)
      if (r == s.levels[k]) ++hits[k];
  }
  EXPECT_EQ(hits[0] + hits[1] + hits[2], static_cast<double>(draws));
  const double sigma = std::sqrt((1.0 / 3) * (2.0 / 3) / draws);
  for (double h : hits) EXPECT_NEAR(h / draws, 1.0 / 3, 3 * sigma);
}

TEST(NextRatio, SingleLevelAndDeterminism) {
  RatioSchedule one;
  one.levels = {0.3};
  for (std::uint64_t b = 0; b < 50; ++b) EXPECT_EQ(next_ratio(one, b), 0.3);
  RatioSchedule s;
  s.seed = 77;
  for (std::uint64_t b = 0; b < 50; ++b) EXPECT_EQ(next_ratio(s, b), next_ratio(s, b));
  RatioSchedule bad;
  bad.levels = {1.0};
  EXPECT_THROW(next_ratio(bad, 0), std::invalid_argument);
}
