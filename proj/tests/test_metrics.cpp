#include <gtest/gtest.h>

#include <cmath>

#include "metric_oracle.hpp"
#include "satdefense/metrics.hpp"
#include "test_support.hpp"

using namespace satdefense;
using satdefense::testing::constant_image;
using satdefense::testing::oracle_metrics;
using satdefense::testing::random_image;
using satdefense::testing::relative_error;

TEST(Metrics, IdenticalImages) {
  Rng rng(1);
  const Image a = random_image(rng, 4, 4, 3);
  const MetricReport r = metric_report(a, a);
  EXPECT_EQ(r.l2, 0.0);
  EXPECT_EQ(r.ssim, 1.0);
  EXPECT_TRUE(std::isinf(r.psnr) && r.psnr > 0);
  EXPECT_EQ(r.mse, 0.0);
  EXPECT_EQ(format_metric(r.psnr), "inf");
}

TEST(Metrics, FullRangeL2On2x2x3) {
  const Image a = constant_image(2, 2, 3, 0.0);
  const Image b = constant_image(2, 2, 3, 1.0);
  EXPECT_NEAR(l2_distance(a, b), 255.0 * std::sqrt(12.0) / 12.0, 1e-12);
  EXPECT_NEAR(l2_distance(a, b), 73.612, 5e-4);
}

TEST(Metrics, SsimBlackVersusWhite) {
  const Image a = constant_image(4, 4, 3, 0.0);
  const Image b = constant_image(4, 4, 3, 1.0);
  const double c1 = (0.01 * 255) * (0.01 * 255);
  const SsimTerms t = ssim_terms(a, b);
  EXPECT_NEAR(t.luminance, c1 / (255.0 * 255.0 + c1), 1e-15);
  EXPECT_EQ(t.contrast, 1.0);
  EXPECT_EQ(t.structure, 1.0);
  EXPECT_NEAR(ssim_global(a, b), 9.999e-5, 1e-8);
}

TEST(Metrics, PsnrBlackVersusWhiteIsZero) {
  const Image a = constant_image(3, 3, 1, 0.0);
  const Image b = constant_image(3, 3, 1, 1.0);
  EXPECT_DOUBLE_EQ(mse(a, b), 255.0 * 255.0);
  EXPECT_NEAR(psnr(a, b), 0.0, 1e-12);
}

TEST(Metrics, ShapeMismatchThrows) {
  const Image a(2, 2, 1), b(2, 3, 1);
  EXPECT_THROW(l2_distance(a, b), ShapeError);
  EXPECT_THROW(ssim_global(a, b), ShapeError);
  EXPECT_THROW(psnr(a, b), ShapeError);
}

TEST(Metrics, MatchesBruteForceOracle) {
  Rng rng(2);
  for (int t = 0; t < 50; ++t) {
    const Image a = random_image(rng, 4, 4, 3);
    const Image b = random_image(rng, 4, 4, 3);
    const auto o = oracle_metrics(a, b);
    const MetricReport r = metric_report(a, b);
    EXPECT_LE(relative_error(o.l2, r.l2), 1e-9);
    EXPECT_LE(relative_error(o.ssim, r.ssim), 1e-9);
    EXPECT_LE(relative_error(o.psnr, r.psnr), 1e-9);
    EXPECT_LE(relative_error(o.mse, r.mse), 1e-9);
  }
}

TEST(Metrics, Symmetry) {
  Rng rng(3);
  for (int t = 0; t < 20; ++t) {
    const Image a = random_image(rng, 5, 3, 3);
    const Image b = random_image(rng, 5, 3, 3);
    EXPECT_EQ(l2_distance(a, b), l2_distance(b, a));
    EXPECT_NEAR(ssim_global(a, b), ssim_global(b, a), 1e-15);
    EXPECT_EQ(psnr(a, b), psnr(b, a));
  }
}

TEST(Metrics, PsnrStrictlyDecreasesWithMse) {
  double prev = kInfinity;
  for (double m : {0.5, 1.0, 10.0, 100.0, 1000.0, 65025.0}) {
    const double p = psnr_from_mse(m);
    EXPECT_LT(p, prev);
    prev = p;
  }
}

TEST(Metrics, L2ZeroOnlyForEqualImages) {
  Rng rng(4);
  Image a = random_image(rng, 3, 3, 1);
  Image b = a;
  b.at(1, 1) = a.at(1, 1) > 0.5 ? a.at(1, 1) - 1e-6 : a.at(1, 1) + 1e-6;
  EXPECT_GT(l2_distance(a, b), 0.0);
}

TEST(Metrics, UnitRadiusConversion) {
  // A uniform per-entry change d on N entries has metric d*255*sqrt(N)/N and
  // unit-scale radius d*sqrt(N).
  const Image a = constant_image(4, 4, 3, 0.2);
  const Image b = constant_image(4, 4, 3, 0.25);
  const double metric = l2_distance(a, b);
  EXPECT_NEAR(l2_metric_to_unit_radius(metric, 48), 0.05 * std::sqrt(48.0), 1e-12);
}

TEST(Metrics, Formatting) {
  EXPECT_EQ(format_metric(0.5), "0.500000");
  EXPECT_EQ(format_metric(kInfinity), "inf");
}
