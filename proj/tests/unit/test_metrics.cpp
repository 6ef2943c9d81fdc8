// Copyright 2026 The voxseg Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "oracles.hpp"
#include "voxseg/error.hpp"
#include "voxseg/metrics.hpp"

namespace {

using namespace voxseg;

LabelVolume points(const Dims3& d, const std::vector<std::array<int, 3>>& pts, int label = 1) {
  std::vector<std::int32_t> v(static_cast<std::size_t>(d.voxels()), 0);
  for (const auto& p : pts) v[static_cast<std::size_t>(d.index(p[0], p[1], p[2]))] = label;
  return LabelVolume(d, std::move(v), label + 1);
}

TEST(Metrics, HausdorffOfTwoPointsIsTheirDistance) {
  const Dims3 d{5, 5, 2};
  const LabelVolume g = points(d, {{0, 0, 0}});
  const LabelVolume p = points(d, {{3, 4, 0}});
  EXPECT_DOUBLE_EQ(hausdorff(g, p, 1), 5.0);
  EXPECT_DOUBLE_EQ(detail::hausdorff_transform(g, p, 1), 5.0);
  EXPECT_DOUBLE_EQ(dsc(g, p, 1), 0.0);
}

TEST(Metrics, IdenticalVolumesScorePerfectly) {
  std::mt19937_64 rng(1);
  const LabelVolume y = oracle::random_labels({6, 7, 8}, 4, rng);
  const MetricReport r = evaluate(y, y, 4);
  ASSERT_EQ(r.per_class.size(), 3u);
  for (const auto& m : r.per_class) {
    EXPECT_EQ(m.dsc, 100.0);
    EXPECT_EQ(m.hd, 0.0);
  }
  EXPECT_EQ(r.mean_dsc, 100.0);
  EXPECT_EQ(r.std_dsc, 0.0);
}

TEST(Metrics, DscHandValue) {
  const Dims3 d{1, 1, 4};
  const LabelVolume g(d, {1, 1, 1, 0}, 2);
  const LabelVolume p(d, {0, 1, 1, 1}, 2);
  EXPECT_DOUBLE_EQ(dsc(g, p, 1), 200.0 * 2 / 6);
  EXPECT_DOUBLE_EQ(dsc(g, p, 5), 100.0);
}

TEST(Metrics, MissingPredictionIsInfiniteAndFlagged) {
  const Dims3 d{4, 4, 4};
  const LabelVolume g = points(d, {{1, 1, 1}, {2, 2, 2}}, 2);
  LabelVolume p = points(d, {{1, 1, 1}}, 1);
  p = LabelVolume(d, std::vector<std::int32_t>(p.data().begin(), p.data().end()), 3);
  const MetricReport r = evaluate(g, p, 3);
  ASSERT_EQ(r.per_class.size(), 2u);
  const ClassMetrics& c2 = r.per_class[1];
  EXPECT_EQ(c2.class_id, 2);
  EXPECT_TRUE(std::isinf(c2.hd));
  EXPECT_TRUE(c2.missing_in_pred);
  EXPECT_FALSE(c2.missing_in_truth);
  EXPECT_TRUE(r.per_class[0].missing_in_truth);
  EXPECT_EQ(r.infinite_hd, 2);
  EXPECT_TRUE(std::isnan(r.mean_hd));
  EXPECT_NE(r.format().find("inf"), std::string::npos);
}

TEST(Metrics, PopulationStatistics) {
  const Dims3 d{1, 1, 6};
  const LabelVolume g(d, {1, 1, 2, 2, 0, 0}, 3);
  const LabelVolume p(d, {1, 1, 2, 0, 0, 0}, 3);
  const MetricReport r = evaluate(g, p, 3);
  const double c2 = 200.0 / 3.0;
  EXPECT_DOUBLE_EQ(r.mean_dsc, (100.0 + c2) / 2);
  EXPECT_NEAR(r.std_dsc, (100.0 - c2) / 2, 1e-12);
  EXPECT_DOUBLE_EQ(r.mean_hd, 0.5);
  EXPECT_DOUBLE_EQ(r.std_hd, 0.5);
}

TEST(Metrics, MatchesBruteForceOnRandomVolumes) {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> ext(1, 8), cls(2, 5);
  std::uniform_real_distribution<double> fill(0.05, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const Dims3 d{ext(rng), ext(rng), ext(rng)};
    const int L = cls(rng);
    const LabelVolume g = oracle::random_labels(d, L, rng, fill(rng));
    const LabelVolume p = oracle::random_labels(d, L, rng, fill(rng));
    const MetricReport r = evaluate(g, p, L);
    for (const auto& m : r.per_class) {
      ASSERT_EQ(m.dsc, oracle::brute_dsc(g, p, m.class_id)) << trial;
      ASSERT_EQ(m.hd, oracle::brute_hausdorff(g, p, m.class_id)) << trial;
    }
  }
}

TEST(Metrics, DistanceTransformPathMatchesBruteForce) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 30; ++trial) {
    std::uniform_int_distribution<int> ext(1, 12);
    const Dims3 d{ext(rng), ext(rng), ext(rng)};
    const LabelVolume g = oracle::random_labels(d, 3, rng, 0.3);
    const LabelVolume p = oracle::random_labels(d, 3, rng, 0.3);
    for (int c = 1; c < 3; ++c) {
      ASSERT_EQ(detail::hausdorff_transform(g, p, c), oracle::brute_hausdorff(g, p, c)) << trial;
    }
  }
}

TEST(Metrics, LargeSetsTakeTheTransformPath) {
  // Two 64-voxel-thick slabs: far more than 2^20 point pairs.
  const Dims3 d{40, 40, 40};
  std::vector<std::int32_t> gv(64000, 0), pv(64000, 0);
  for (std::int64_t i = 0; i < 40; ++i)
    for (std::int64_t j = 0; j < 40; ++j)
      for (std::int64_t k = 0; k < 40; ++k) {
        if (i < 20) gv[static_cast<std::size_t>(d.index(i, j, k))] = 1;
        if (i >= 5 && i < 25) pv[static_cast<std::size_t>(d.index(i, j, k))] = 1;
      }
  const LabelVolume g(d, gv, 2), p(d, pv, 2);
  EXPECT_DOUBLE_EQ(hausdorff(g, p, 1), 5.0);
  EXPECT_DOUBLE_EQ(dsc(g, p, 1), 75.0);
}

// Two-tailed p from Simpson integration of the Student t density.
double simpson_two_tailed_p(double t, int df) {
  const double nu = df;
  const double logc = std::lgamma((nu + 1) / 2) - std::lgamma(nu / 2) - 0.5 * std::log(nu * std::numbers::pi);
  auto pdf = [&](double x) { return std::exp(logc - (nu + 1) / 2 * std::log1p(x * x / nu)); };
  const int n = 20000;
  const double h = std::abs(t) / n;
  double s = pdf(0) + pdf(std::abs(t));
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4 : 2) * pdf(i * h);
  return 1.0 - 2.0 * s * h / 3.0;
}

TEST(TTest, MatchesNumericIntegration) {
  const std::vector<double> a{83.1, 84.0, 82.5, 85.2, 83.9, 84.4};
  const std::vector<double> b{82.0, 82.1, 81.9, 83.0, 82.2, 82.8};
  const TTestResult r = paired_t_test(a, b);
  double mean = 0, ss = 0;
  for (std::size_t i = 0; i < a.size(); ++i) mean += a[i] - b[i];
  mean /= 6;
  for (std::size_t i = 0; i < a.size(); ++i) ss += (a[i] - b[i] - mean) * (a[i] - b[i] - mean);
  EXPECT_NEAR(r.t, mean / std::sqrt(ss / 5 / 6), 1e-12);
  EXPECT_EQ(r.df, 5);
  EXPECT_NEAR(r.p, simpson_two_tailed_p(r.t, 5), 1e-9);

  const TTestResult small = paired_t_test({1, 2, 3, 4}, {0, 0, 0, 0});
  EXPECT_NEAR(small.p, simpson_two_tailed_p(small.t, 3), 1e-9);
}

TEST(TTest, DegenerateInputs) {
  const TTestResult same = paired_t_test({1, 2}, {1, 2});
  EXPECT_EQ(same.p, 1.0);
  const TTestResult shifted = paired_t_test({2, 3}, {1, 2});
  EXPECT_TRUE(std::isinf(shifted.t));
  EXPECT_EQ(shifted.p, 0.0);
  EXPECT_THROW(paired_t_test({1}, {1}), ValidationError);
  EXPECT_THROW(paired_t_test({1, 2}, {1}), ValidationError);
}

}  // namespace
