#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "grad_oracle.hpp"
#include "satdefense/fileio.hpp"
#include "satdefense/model.hpp"
#include "satdefense/datasets.hpp"
#include "test_support.hpp"

using namespace satdefense;
using satdefense::testing::random_image;
using satdefense::testing::TempDir;

TEST(Model, StandardCnnShapeAndParameterCount) {
  const Classifier m = Classifier::standard_cnn({32, 32, 3}, 10, 1);
  // conv 8*27+8, conv 16*72+16, dense 10*(8*8*16)+10
  EXPECT_EQ(m.parameter_count(), 224u + 1168u + 10250u);
  EXPECT_EQ(m.layers().size(), 7u);
  EXPECT_EQ(m.num_classes(), 10u);
}

TEST(Model, ZeroWeightsGiveZeroLogits) {
  Classifier m = Classifier::standard_cnn({8, 8, 3}, 4, 1);
  for (auto& l : m.layers()) {
    std::visit([](auto& layer) {
      if constexpr (requires { layer.weight; }) {
        std::fill(layer.weight.begin(), layer.weight.end(), 0.0f);
      }
    }, l);
  }
  Rng rng(2);
  for (float z : m.forward(random_image(rng, 8, 8, 3))) EXPECT_EQ(z, 0.0f);
}

TEST(Model, ForwardIsDeterministic) {
  const Classifier m = Classifier::standard_cnn({8, 8, 3}, 4, 3);
  Rng rng(3);
  const Image x = random_image(rng, 8, 8, 3);
  EXPECT_EQ(m.forward(x), m.forward(x));
  EXPECT_EQ(Classifier::standard_cnn({8, 8, 3}, 4, 3), m);
}

TEST(Model, DenseOnlyOnOnePixelIsHandMatrixMultiply) {
  Classifier m({1, 1, 1}, 2, {Dense<float>{{1, 1, 1}, 2, {2.0f, -3.0f}, {0.5f, 0.25f}}});
  const Image x = Image::from_values(1, 1, 1, {0.5});
  const auto z = m.forward(x);
  EXPECT_FLOAT_EQ(z[0], 2.0f * 0.5f + 0.5f);
  EXPECT_FLOAT_EQ(z[1], -3.0f * 0.5f + 0.25f);
  EXPECT_EQ(m.predict(x), 0u);
}

TEST(Model, ShapeMismatchThrows) {
  const Classifier m = Classifier::standard_cnn({8, 8, 3}, 4, 3);
  EXPECT_THROW(m.forward(Image(8, 8, 1)), ShapeError);
  EXPECT_THROW(m.forward(Image(9, 8, 3)), ShapeError);
  EXPECT_THROW(Classifier({4, 4, 1}, 3, {Dense<float>{{4, 4, 1}, 2, {}, {}}}), ShapeError);
  EXPECT_THROW(Classifier({4, 4, 1}, 2, {Relu{{4, 4, 3}}}), ShapeError);
}

TEST(Losses, UniformLogitsCrossEntropyIsLogTen) {
  const std::vector<double> z(10, 0.7);
  const auto [loss, g] = loss_and_logit_grad<double>(z, 4, CrossEntropyLoss{});
  EXPECT_NEAR(loss, std::log(10.0), 1e-12);
  EXPECT_NEAR(loss, 2.3026, 1e-4);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_NEAR(g[i], 0.1 - (i == 4 ? 1.0 : 0.0), 1e-12);
}

TEST(Losses, CrossEntropyGradientIsSoftmaxMinusOneHot) {
  Rng rng(4);
  for (int t = 0; t < 20; ++t) {
    std::vector<double> z(6);
    for (double& v : z) v = rng.uniform(-5, 5);
    const std::size_t label = rng.below(6);
    const auto p = softmax<double>(z);
    const auto [loss, g] = loss_and_logit_grad<double>(z, label, CrossEntropyLoss{});
    EXPECT_NEAR(loss, -std::log(p[label]), 1e-12);
    for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(g[i], p[i] - (i == label ? 1.0 : 0.0), 1e-12);
  }
}

TEST(Losses, CwMarginSatisfiedIsZeroWithZeroGradient) {
  const std::vector<double> z = {1.0, 4.0, 2.5};
  const auto [loss, g] = loss_and_logit_grad<double>(z, 0, CwMarginLoss{1, 0.0});
  EXPECT_EQ(loss, 0.0);
  for (double v : g) EXPECT_EQ(v, 0.0);
  const auto [loss2, g2] = loss_and_logit_grad<double>(z, 0, CwMarginLoss{0, 0.0});
  EXPECT_DOUBLE_EQ(loss2, 3.0);
  EXPECT_EQ(g2, (std::vector<double>{-1.0, 1.0, 0.0}));
}

TEST(Losses, InvalidClassIndexThrows) {
  const Classifier m = Classifier::standard_cnn({8, 8, 3}, 4, 3);
  Rng rng(5);
  const Image x = random_image(rng, 8, 8, 3);
  EXPECT_THROW(loss_and_input_grad(m, x, 4, CrossEntropyLoss{}), ArgumentError);
  EXPECT_THROW(loss_and_input_grad(m, x, 0, CwMarginLoss{7, 0.0}), ArgumentError);
}

TEST(Gradients, EveryLayerMatchesFiniteDifferences) {
  for (const auto& check : satdefense::testing::gradient_suite(11, 20)) {
    EXPECT_EQ(check.probes, 20u) << check.what;
    EXPECT_LE(check.max_rel_error, 1e-3) << check.what;
  }
}

TEST(Gradients, EightByEightInputGradient) {
  using satdefense::testing::DModel;
  const DModel m = DModel::standard_cnn({8, 8, 1}, 3, 12);
  Rng rng(13);
  const auto x = satdefense::testing::random_vector(rng, 64, 0.0, 1.0);
  const auto r = satdefense::testing::check_input_grad(m, x, 1, CrossEntropyLoss{}, rng, 20);
  EXPECT_EQ(r.probes, 20u);
  EXPECT_LE(r.max_rel_error, 1e-3);
}

TEST(Training, ZeroLearningRateLeavesParameters) {
  const Dataset ds = synth_dataset(1, 16, 8, 1, 2);
  Classifier m = Classifier::standard_cnn({8, 8, 1}, 2, 4);
  const Classifier before = m;
  train(m, ds, TrainConfig{2, 4, 0.0, 1});
  EXPECT_EQ(m, before);
}

TEST(Training, OneSampleDenseStepMatchesHandGradient) {
  // z = W x + b on a 2-pixel input, cross-entropy on label 1.
  Classifier m({1, 2, 1}, 2, {Dense<float>{{1, 2, 1}, 2, {0.5f, -0.25f, 0.1f, 0.3f}, {0.0f, 0.2f}}});
  const Image x = Image::from_values(1, 2, 1, {0.6, 0.8});
  const Dataset ds("one", 2, {{x, 1}});
  const double z0 = 0.5 * 0.6 - 0.25 * 0.8;
  const double z1 = 0.1 * 0.6 + 0.3 * 0.8 + 0.2;
  const double p0 = std::exp(z0) / (std::exp(z0) + std::exp(z1));
  const double p1 = 1.0 - p0;
  const double lr = 0.5;
  auto grads = m.make_grads();
  const std::vector<std::size_t> batch = {0};
  sgd_step(m, ds, batch, lr, grads);
  const auto& d = std::get<Dense<float>>(m.layers()[0]);
  EXPECT_NEAR(d.weight[0], 0.5 - lr * p0 * 0.6, 1e-6);
  EXPECT_NEAR(d.weight[1], -0.25 - lr * p0 * 0.8, 1e-6);
  EXPECT_NEAR(d.weight[2], 0.1 - lr * (p1 - 1.0) * 0.6, 1e-6);
  EXPECT_NEAR(d.weight[3], 0.3 - lr * (p1 - 1.0) * 0.8, 1e-6);
  EXPECT_NEAR(d.bias[0], 0.0 - lr * p0, 1e-6);
  EXPECT_NEAR(d.bias[1], 0.2 - lr * (p1 - 1.0), 1e-6);
}

TEST(Training, DivergenceRaisesTrainingError) {
  const Dataset ds = synth_dataset(1, 16, 8, 1, 2);
  Classifier m = Classifier::standard_cnn({8, 8, 1}, 2, 4);
  EXPECT_THROW(train(m, ds, TrainConfig{5, 4, 1e30, 1}), TrainingError);
}

TEST(Training, FixedSeedIsDeterministic) {
  const Dataset ds = synth_dataset(2, 40, 8, 1, 2);
  Classifier a = Classifier::standard_cnn({8, 8, 1}, 2, 4);
  Classifier b = a;
  train(a, ds, TrainConfig{2, 8, 0.05, 9});
  train(b, ds, TrainConfig{2, 8, 0.05, 9});
  EXPECT_EQ(a, b);
}

TEST(Checkpoint, RoundTripIsBitwise) {
  TempDir tmp;
  const Classifier m = Classifier::standard_cnn({8, 8, 3}, 4, 5);
  save_checkpoint(m, tmp / "m.ckpt");
  const Classifier back = load_checkpoint(tmp / "m.ckpt");
  EXPECT_EQ(back, m);
  Rng rng(6);
  const Image x = random_image(rng, 8, 8, 3);
  EXPECT_EQ(back.forward(x), m.forward(x));
  EXPECT_EQ(encode_checkpoint(back), encode_checkpoint(m));
}

TEST(Checkpoint, RejectsCorruption) {
  const Classifier m = Classifier::standard_cnn({8, 8, 3}, 4, 5);
  const auto good = encode_checkpoint(m);
  auto bad_magic = good;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_checkpoint(bad_magic), FormatError);
  auto bumped = good;
  bumped[8] = 2;  // version field
  try {
    decode_checkpoint(bumped);
    FAIL() << "bumped version accepted";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos);
  }
  auto truncated = good;
  truncated.pop_back();
  EXPECT_THROW(decode_checkpoint(truncated), FormatError);
  auto trailing = good;
  trailing.push_back(0);
  EXPECT_THROW(decode_checkpoint(trailing), FormatError);
}
