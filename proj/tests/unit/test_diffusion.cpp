#include <gtest/gtest.h>

#include <cmath>

#include "support.hpp"
#include "tabguide/diffusion.hpp"
#include "tabguide/errors.hpp"

namespace tabguide {
namespace {

using testing::random_matrix;

TEST(Schedule, TwoStepExample) {
  const NoiseSchedule s = build_schedule(2, 0.99, 0.98);
  EXPECT_DOUBLE_EQ(s.alpha(1), 0.99);
  EXPECT_DOUBLE_EQ(s.alpha(2), 0.98);
  EXPECT_DOUBLE_EQ(s.alpha_bar(0), 1.0);
  EXPECT_NEAR(s.alpha_bar(2), 0.9702, 1e-15);
  // σ_1 = (1 − α_1)(1 − ᾱ_0)/(1 − ᾱ_1) = 0.
  EXPECT_DOUBLE_EQ(s.sigma(1), 0.0);
  EXPECT_NEAR(s.sigma(2), 0.02 * 0.01 / (1.0 - 0.9702), 1e-15);
}

TEST(Schedule, DefaultsAreMonotone) {
  const NoiseSchedule s = build_schedule(200, 0.9999, 0.98);
  for (int t = 1; t <= 200; ++t) {
    EXPECT_LT(s.alpha_bar(t), s.alpha_bar(t - 1));
    EXPECT_GT(s.sigma(t), -1e-18);
  }
  EXPECT_NEAR(s.alpha(100), 0.9999 - 99.0 * (0.9999 - 0.98) / 199.0, 1e-15);
}

TEST(Schedule, RejectsBadArguments) {
  EXPECT_THROW(build_schedule(1, 0.99, 0.98), ConfigError);
  EXPECT_THROW(build_schedule(10, 0.98, 0.99), ConfigError);
  EXPECT_THROW(build_schedule(10, 1.0, 0.99), ConfigError);
  const NoiseSchedule s = build_schedule(10, 0.99, 0.98);
  EXPECT_THROW(s.check_step(0), ConfigError);
  EXPECT_THROW(s.check_step(11), ConfigError);
  EXPECT_THROW(s.alpha_bar(11), ConfigError);
}

TEST(ForwardNoise, MarginalMomentsMatch) {
  const NoiseSchedule s = build_schedule(200, 0.9999, 0.98);
  const int t = 120;
  Rng rng(1);
  const Eigen::Index n = 200000;
  const Matrix x0 = Matrix::Constant(n, 1, 2.0);
  const Matrix xt = forward_noise(s, x0, t, standard_normal(rng, n, 1));
  const double mean = xt.mean();
  const double var = (xt.array() - mean).square().sum() / static_cast<double>(n - 1);
  EXPECT_NEAR(mean, 2.0 * std::sqrt(s.alpha_bar(t)), 5e-3);
  EXPECT_NEAR(var, 1.0 - s.alpha_bar(t), 1e-2);
}

TEST(DirtyEstimate, InvertsForwardNoiseWithTrueNoise) {
  const NoiseSchedule s = build_schedule(200, 0.9999, 0.98);
  Rng rng(4);
  const Matrix x0 = random_matrix(rng, 8, 3);
  for (int t : {1, 50, 200}) {
    const Matrix eps = random_matrix(rng, 8, 3);
    const Matrix back = dirty_estimate_from_noise(s, forward_noise(s, x0, t, eps), eps, t);
    EXPECT_LE((back - x0).cwiseAbs().maxCoeff(), 1e-12) << "t = " << t;
  }
}

TEST(DenoiseStep, SigmaMultipliesNoiseLiterally) {
  const NoiseSchedule s = build_schedule(50, 0.999, 0.98);
  Rng rng(5);
  const Matrix x = random_matrix(rng, 2, 3);
  const Matrix eps = random_matrix(rng, 2, 3);
  const Matrix z = random_matrix(rng, 2, 3);
  const int t = 20;
  const Matrix diff = denoise_from_noise(s, x, eps, t, z) - denoise_from_noise(s, x, eps, t, Matrix::Zero(2, 3));
  EXPECT_LE((diff - s.sigma(t) * z).norm(), 1e-14);
}

TEST(Denoiser, ShapeAndDeterministicInit) {
  DenoiserConfig cfg{4, 8, 6, 4};
  DenoiserNet a(cfg, 9);
  DenoiserNet b(cfg, 9);
  DenoiserNet c(cfg, 10);
  EXPECT_EQ(a.parameters().size(), 14u);
  EXPECT_EQ(a.parameter_names().size(), 14u);
  EXPECT_EQ(a.parameters()[0], b.parameters()[0]);
  EXPECT_NE(a.parameters()[0], c.parameters()[0]);
  Rng rng(1);
  const Matrix x = random_matrix(rng, 3, 4);
  EXPECT_EQ(a.predict(x, 7).rows(), 3);
  EXPECT_EQ(a.predict(x, 7).cols(), 4);
  EXPECT_THROW(a.predict(random_matrix(rng, 3, 5), 7), DimensionError);
}

TEST(Denoiser, InitBoundedByFanIn) {
  DenoiserConfig cfg{4, 16, 6, 4};
  DenoiserNet net(cfg, 1);
  const auto names = net.parameter_names();
  for (std::size_t p = 0; p < names.size(); p += 2) {
    const Matrix& w = net.parameters()[p];
    EXPECT_LE(w.cwiseAbs().maxCoeff(), 1.0 / std::sqrt(static_cast<double>(w.rows()))) << names[p];
  }
}

TEST(Denoiser, TapedForwardMatchesPredict) {
  DenoiserConfig cfg{3, 8, 6, 4};
  DenoiserNet net(cfg, 2);
  Rng rng(2);
  const Matrix x = random_matrix(rng, 5, 3);
  const std::vector<int> steps{1, 2, 3, 4, 5};
  ad::Tape tape;
  ad::Var out = net.record(tape, tape.leaf(x, false), steps);
  EXPECT_EQ(tape.value(out), net.predict(x, steps));
}

TEST(Train, LossDecreasesAndIsDeterministic) {
  const NoiseSchedule s = build_schedule(50, 0.999, 0.95);
  Rng rng(8);
  const Matrix data = random_matrix(rng, 256, 2, 0.1);
  DenoiserConfig cfg{2, 32, 16, 8};
  TrainConfig tc;
  tc.epochs = 30;
  tc.batch_size = 64;
  tc.learning_rate = 1e-3;
  tc.optimizer = OptimizerKind::Adam;
  tc.seed = 3;
  DenoiserNet a(cfg, 1);
  DenoiserNet b(cfg, 1);
  const TrainResult ra = train(a, s, data, tc);
  const TrainResult rb = train(b, s, data, tc);
  ASSERT_EQ(ra.epoch_loss.size(), 30u);
  EXPECT_EQ(ra.epoch_loss, rb.epoch_loss);
  EXPECT_EQ(a.parameters()[0], b.parameters()[0]);
  const double first = (ra.epoch_loss[0] + ra.epoch_loss[1]) / 2.0;
  const double last = (ra.epoch_loss[28] + ra.epoch_loss[29]) / 2.0;
  EXPECT_LT(last, first);
}

TEST(Train, SgdTakesPlainSteps) {
  const NoiseSchedule s = build_schedule(10, 0.999, 0.95);
  DenoiserConfig cfg{2, 4, 4, 2};
  DenoiserNet net(cfg, 1);
  const DenoiserNet before = net;
  TrainConfig tc;
  tc.epochs = 1;
  tc.batch_size = 8;
  tc.learning_rate = 0.0 + 1e-12;
  tc.seed = 1;
  train(net, s, Matrix::Zero(8, 2), tc);
  for (std::size_t p = 0; p < net.parameters().size(); ++p) {
    EXPECT_LE((net.parameters()[p] - before.parameters()[p]).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(Train, RejectsBadConfig) {
  TrainConfig tc;
  tc.epochs = 0;
  EXPECT_THROW(tc.validate(), ConfigError);
  tc.epochs = 1;
  tc.batch_size = 0;
  EXPECT_THROW(tc.validate(), ConfigError);
  tc.batch_size = 1;
  tc.learning_rate = -1.0;
  EXPECT_THROW(tc.validate(), ConfigError);
}

}  // namespace
}  // namespace tabguide
