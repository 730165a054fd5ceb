#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "satdefense/attacks.hpp"
#include "satdefense/metrics.hpp"
#include "test_support.hpp"

using namespace satdefense;
using satdefense::testing::random_image;

namespace {

// z0 = w . x, z1 = -w . x on a 2x2 gray image.
Classifier toy_linear() {
  const std::vector<float> w = {0.5f, -1.0f, 0.25f, -0.75f};
  std::vector<float> weight(w);
  for (float v : w) weight.push_back(-v);
  return Classifier({2, 2, 1}, 2, {Dense<float>{{2, 2, 1}, 2, weight, {0.0f, 0.0f}}});
}

AttackBudget linf(double eps) { return {eps, 0.05, Norm::kLinf}; }
AttackBudget l2(double eps) { return {8.0 / 255.0, eps, Norm::kL2}; }

}  // namespace

TEST(Fgsm, ZeroEpsReturnsInput) {
  const Classifier m = Classifier::standard_cnn({8, 8, 3}, 4, 1);
  Rng rng(1);
  const Image x = random_image(rng, 8, 8, 3);
  EXPECT_EQ(fgsm(m, x, 0, 1, linf(0.0)).perturbed, x);
}

TEST(Fgsm, ToyLinearModelMovesAlongWeightSign) {
  // Descending CE(target = 1) raises z1 - z0 = -2 w . x, so each pixel moves
  // by -eps * sign(w).
  const Classifier m = toy_linear();
  const Image x = Image::from_values(2, 2, 1, {0.5, 0.5, 0.5, 0.5});
  const auto ae = fgsm(m, x, 0, 1, linf(0.1));
  const std::vector<double> expected = {0.4, 0.6, 0.4, 0.6};
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(ae.perturbed.values()[i], expected[i], 1e-12);
  EXPECT_EQ(ae.target_label, 1u);
  EXPECT_EQ(ae.true_label, 0u);
}

TEST(Fgsm, PerturbationIsSignedEpsOrClipped) {
  const Classifier m = Classifier::standard_cnn({8, 8, 3}, 4, 2);
  Rng rng(2);
  const double eps = 0.03;
  for (int t = 0; t < 10; ++t) {
    const Image x = random_image(rng, 8, 8, 3);
    const auto ae = fgsm(m, x, 0, 2, linf(eps));
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double d = ae.perturbed.values()[i] - x.values()[i];
      const double hi = std::min(1.0, x.values()[i] + eps) - x.values()[i];
      const double lo = std::max(0.0, x.values()[i] - eps) - x.values()[i];
      const bool ok = std::abs(d) < 1e-15 || std::abs(d - hi) < 1e-15 || std::abs(d - lo) < 1e-15;
      EXPECT_TRUE(ok) << d;
    }
  }
}

TEST(Ifgsm, OneFullStepEqualsFgsm) {
  const Classifier m = Classifier::standard_cnn({8, 8, 3}, 4, 3);
  Rng rng(3);
  const Image x = random_image(rng, 8, 8, 3);
  EXPECT_EQ(ifgsm(m, x, 1, 3, linf(0.03), 1, 0.03).perturbed, fgsm(m, x, 1, 3, linf(0.03)).perturbed);
}

TEST(Ifgsm, ReachesTargetOnToyModel) {
  const Classifier m = toy_linear();
  const Image x = Image::from_values(2, 2, 1, {0.8, 0.2, 0.8, 0.2});
  ASSERT_EQ(m.predict(x), 0u);
  const auto ae = ifgsm(m, x, 0, 1, linf(0.2), 10, 0.05);
  EXPECT_TRUE(ae.reached_target);
  EXPECT_TRUE(within_budget(x, ae.perturbed, linf(0.2)));
}

TEST(Ifgsm, RejectsBadArguments) {
  const Classifier m = toy_linear();
  const Image x(2, 2, 1);
  EXPECT_THROW(ifgsm(m, x, 0, 1, linf(0.1), 0, 0.01), ArgumentError);
  EXPECT_THROW(ifgsm(m, x, 0, 1, linf(0.1), 3, 0.0), ArgumentError);
  EXPECT_THROW(ifgsm(m, x, 0, 0, linf(0.1), 3, 0.01), ArgumentError);
  EXPECT_THROW(ifgsm(m, x, 0, 2, linf(0.1), 3, 0.01), ArgumentError);
  EXPECT_THROW(fgsm(m, x, 0, 1, l2(0.05)), ArgumentError);
  EXPECT_THROW(cw(m, x, 0, 1, linf(0.1)), ArgumentError);
}

TEST(Cw, AlreadyTargetTakesNoStep) {
  const Classifier m = toy_linear();
  const Image x = Image::from_values(2, 2, 1, {0.2, 0.8, 0.2, 0.8});
  ASSERT_EQ(m.predict(x), 1u);
  const auto ae = cw(m, x, 0, 1, l2(0.05));
  EXPECT_EQ(ae.rounds_used, 0u);
  EXPECT_EQ(ae.perturbed, x);
  EXPECT_TRUE(ae.reached_target);
}

TEST(Cw, FlipsToyModelWithinRadius) {
  const Classifier m = toy_linear();
  const Image x = Image::from_values(2, 2, 1, {0.9, 0.1, 0.9, 0.1});
  ASSERT_EQ(m.predict(x), 0u);
  const AttackBudget b = l2(30.0);  // unit radius 30 * 4 / 255 = 0.47
  const auto ae = cw(m, x, 0, 1, b);
  EXPECT_TRUE(ae.reached_target);
  EXPECT_LT(ae.rounds_used, 100u);
  EXPECT_LE(l2_distance(x, ae.perturbed), 30.0 + kBudgetTolerance);
}

TEST(Budget, ProjectionHoldsOverRandomInvocations) {
  const Classifier m = Classifier::standard_cnn({6, 6, 3}, 4, 4);
  Rng rng(4);
  for (int t = 0; t < 1000; ++t) {
    const Image x = random_image(rng, 6, 6, 3);
    const std::size_t target = 1 + rng.below(3);
    const int kind = t % 4;
    AdversarialExample ae;
    AttackBudget b;
    if (kind == 0) {
      b = linf(rng.uniform(0.001, 0.1));
      ae = fgsm(m, x, 0, target, b);
    } else if (kind == 1) {
      b = linf(rng.uniform(0.001, 0.1));
      ae = ifgsm(m, x, 0, target, b, 3, b.linf_eps / 2);
    } else if (kind == 2) {
      b = l2(rng.uniform(0.001, 0.2));
      CwOptions o;
      o.steps = 5;
      ae = cw(m, x, 0, target, b, o);
    } else {
      b = t % 8 == 3 ? linf(rng.uniform(0.001, 0.1)) : l2(rng.uniform(0.001, 0.2));
      BpdaOptions o;
      o.rounds = 3;
      o.keep_trace = false;
      ae = bpda(m, SatDefense{{0.1, 0.1, 5}}, x, 0, target, b, o, rng).example;
    }
    ASSERT_TRUE(ae.perturbed.in_range()) << t;
    ASSERT_TRUE(within_budget(x, ae.perturbed, b)) << t;
  }
}

TEST(Budget, ProjectionOfFarPointLandsOnBoundary) {
  const Image x = satdefense::testing::constant_image(4, 4, 1, 0.5);
  std::vector<double> far(16, 0.9);
  const AttackBudget b = l2(1.0);
  project_to_budget(x, far, b);
  EXPECT_NEAR(l2_distance(x, Image::from_values(4, 4, 1, far)), 1.0, 1e-9);
  std::vector<double> box(16, 0.9);
  project_to_budget(x, box, linf(0.1));
  for (double v : box) EXPECT_NEAR(v, 0.6, 1e-15);
}

TEST(Bpda, IdentityDefenseMatchesIfgsm) {
  const Classifier m = Classifier::standard_cnn({8, 8, 3}, 4, 5);
  Rng rng(5);
  const Image x = random_image(rng, 8, 8, 3);
  BpdaOptions o;
  o.rounds = 7;
  o.learning_rate = 0.25;
  const auto b = bpda(m, IdentityDefense{}, x, 0, 2, linf(0.04), o, rng);
  const auto i = ifgsm(m, x, 0, 2, linf(0.04), 7, 0.25 * 0.04);
  EXPECT_EQ(b.example.perturbed, i.perturbed);
  ASSERT_EQ(b.trace.size(), 7u);
  EXPECT_EQ(b.trace.back().candidate, b.example.perturbed);
  EXPECT_EQ(b.trace.front().round, 1u);
}

TEST(Bpda, SameSeedIsDeterministicAndZeroRoundsRejected) {
  const Classifier m = Classifier::standard_cnn({8, 8, 3}, 4, 6);
  Rng data(6);
  const Image x = random_image(data, 8, 8, 3);
  BpdaOptions o;
  o.rounds = 4;
  Rng a(11), b(11);
  const SatDefense sat{{0.16, 0.16, 4}};
  EXPECT_EQ(bpda(m, sat, x, 0, 1, linf(8.0 / 255), o, a).example.perturbed,
            bpda(m, sat, x, 0, 1, linf(8.0 / 255), o, b).example.perturbed);
  o.rounds = 0;
  EXPECT_THROW(bpda(m, sat, x, 0, 1, linf(8.0 / 255), o, a), ArgumentError);
}

TEST(Targets, DrawnTargetNeverEqualsTrueLabel) {
  Rng rng(7);
  std::vector<int> seen(10, 0);
  for (int t = 0; t < 5000; ++t) {
    const std::size_t label = rng.below(10);
    const std::size_t target = draw_target(label, 10, rng);
    ASSERT_NE(target, label);
    ASSERT_LT(target, 10u);
    ++seen[target];
  }
  for (int c : seen) EXPECT_GT(c, 350);
}

TEST(Ifgsm, AtLeastAsStrongAsFgsmOnToyModel) {
  const Classifier m = toy_linear();
  Rng rng(8);
  std::size_t f = 0, i = 0;
  for (int t = 0; t < 200; ++t) {
    const Image x = random_image(rng, 2, 2, 1);
    if (m.predict(x) != 0) continue;
    f += fgsm(m, x, 0, 1, linf(0.05)).reached_target;
    i += ifgsm(m, x, 0, 1, linf(0.05), 10, 0.0125).reached_target;
  }
  EXPECT_GE(i, f);
}
