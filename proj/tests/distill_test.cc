// tests/distill_test.cc

// Copyright 2026  The sita-desk authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include <cmath>

#include <gtest/gtest.h>

#include "gradcheck.h"
#include "sita/distill.h"

namespace sita {
namespace {

Matrix Frame(double a, double b) {
  Matrix m(1, 2);
  m << a, b;
  return m;
}

KdConfig Tau(double tau) {
  KdConfig c;
  c.tau_kd = tau;
  return c;
}

TEST(Soften, TwoLogitFrame) {
  const Matrix p = Soften(Frame(0.0, std::log(9.0)), 1.0).array().exp();
  EXPECT_NEAR(p(0, 0), 0.1, 1e-15);
  EXPECT_NEAR(p(0, 1), 0.9, 1e-15);
}

TEST(Soften, UnitTemperatureIsSoftmax) {
  Rng rng(41);
  const Matrix logits = testing::RandomMatrix(rng, 3, 5);
  EXPECT_LT((Soften(logits, 1.0) - LogSoftmaxRows(logits)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Soften, HighTemperatureFlattens) {
  Rng rng(42);
  for (int i = 0; i < 100; ++i) {
    const Matrix logits = testing::RandomMatrix(rng, 2, 6, 5.0).cwiseMax(-10.0).cwiseMin(10.0);
    const Matrix p = Soften(logits, 1e6).array().exp();
    for (Eigen::Index t = 0; t < p.rows(); ++t)
      ASSERT_LT(p.row(t).maxCoeff() - p.row(t).minCoeff(), 1e-5);
  }
}

TEST(Soften, RowsNormalize) {
  Rng rng(43);
  for (int i = 0; i < 200; ++i) {
    const Matrix p =
        Soften(testing::RandomMatrix(rng, 4, 5, 10.0), rng.Uniform(0.1, 10.0)).array().exp();
    for (Eigen::Index t = 0; t < p.rows(); ++t) ASSERT_NEAR(p.row(t).sum(), 1.0, 1e-10);
  }
  EXPECT_THROW(Soften(Frame(0, 0), 0.0), Error);
}

TEST(KdLoss, KnownValue) {
  const double v = KdLoss(Frame(0.0, std::log(9.0)), Frame(0.0, 0.0), Tau(1.0)).value;
  EXPECT_NEAR(v, 0.1 * std::log(0.1 / 0.5) + 0.9 * std::log(0.9 / 0.5), 1e-15);
  EXPECT_NEAR(v, 0.368064, 1e-6);
}

TEST(KdLoss, IdenticalLogitsGiveZero) {
  Rng rng(44);
  const Matrix logits = testing::RandomMatrix(rng, 5, 4, 3.0);
  EXPECT_NEAR(KdLoss(logits, logits, KdConfig()).value, 0.0, 1e-12);
  // A constant per-row shift leaves the softened posteriors unchanged.
  const Matrix shifted = (logits.array() + 2.5).matrix();
  EXPECT_NEAR(KdLoss(logits, shifted, KdConfig()).value, 0.0, 1e-12);
}

TEST(KdLoss, NonNegative) {
  Rng rng(45);
  for (int i = 0; i < 1000; ++i) {
    const Matrix t = testing::RandomMatrix(rng, 3, 5, 3.0);
    const Matrix s = testing::RandomMatrix(rng, 3, 5, 3.0);
    ASSERT_GE(KdLoss(t, s, KdConfig()).value, 0.0);
  }
}

TEST(KdLoss, GradientOnlyForStudent) {
  Rng rng(46);
  for (int i = 0; i < 500; ++i) ASSERT_LT(testing::KdGradError(rng), 1e-4);
  const LossReport r = KdLoss(Frame(0, 1), Frame(1, 0), KdConfig());
  EXPECT_TRUE(r.Has("student_logits"));
  EXPECT_EQ(r.grads.size(), 1u);
}

TEST(KdLoss, ShapeMismatch) {
  EXPECT_THROW(KdLoss(Matrix::Zero(2, 3), Matrix::Zero(2, 4), KdConfig()), Error);
}

LossReport Report(double value, double g) {
  LossReport r;
  r.value = value;
  r.AddGrad("w", Eigen::MatrixXd::Constant(2, 1, g));
  return r;
}

TEST(Stage2Loss, WeightedSum) {
  KdConfig cfg;
  const LossReport r = Stage2Loss(Report(2.0, 1.0), Report(1.0, -3.0), cfg);
  EXPECT_NEAR(r.value, 1.7, 1e-15);
  EXPECT_NEAR(r.Grad("w")(0, 0), 0.7 * 1.0 + 0.3 * -3.0, 1e-12);
}

TEST(Stage2Loss, DeltaOneIsCtc) {
  KdConfig cfg;
  cfg.delta = 1.0;
  const LossReport r = Stage2Loss(Report(2.25, 0.5), Report(7.0, 4.0), cfg);
  EXPECT_EQ(r.value, 2.25);
  EXPECT_EQ(r.Grad("w")(1, 0), 0.5);
}

TEST(Stage2Loss, LinearInComponents) {
  Rng rng(47);
  KdConfig cfg;
  cfg.delta = 0.5;
  for (int i = 0; i < 100; ++i) {
    const double a = rng.Uniform(0, 5), b = rng.Uniform(0, 5);
    const double c = std::ldexp(1.0, static_cast<int>(rng.Index(8)) - 4);
    const double base = Stage2Loss(Report(a, 0), Report(b, 0), cfg).value;
    ASSERT_EQ(Stage2Loss(Report(c * a, 0), Report(c * b, 0), cfg).value, c * base);
  }
}

}  // namespace
}  // namespace sita
