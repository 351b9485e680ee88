// Copyright 2026 The flowplan Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "flowplan/error.hpp"
#include "flowplan/nn.hpp"
#include "flowplan/optim.hpp"

namespace flowplan {
namespace {

// Scalar Adam written out longhand from the update rule.
struct ScalarAdam {
  double lr, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  double m = 0.0, v = 0.0;
  int t = 0;
  double step(double x, double g) {
    ++t;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mh = m / (1 - std::pow(b1, t)), vh = v / (1 - std::pow(b2, t));
    return x - lr * mh / (std::sqrt(vh) + eps);
  }
};

TEST(Adam, MatchesScalarReferenceOnQuadratic) {
  nn::ParameterSet ps;
  Rng rng(1);
  ad::Tensor w = ps.add("w", {1, 2}, rng);
  w.mutable_data()[0] = 1.5;
  w.mutable_data()[1] = -0.5;
  optim::OptimizerState state;
  state.config.learning_rate = 0.05;
  ScalarAdam r0{0.05}, r1{0.05};
  double x0 = 1.5, x1 = -0.5;
  for (int i = 0; i < 50; ++i) {
    ps.zero_grad();
    ad::backward(ad::sum(ad::mul(w, w)));  // grad 2x
    optim::adam_step(ps, state);
    x0 = r0.step(x0, 2 * x0);
    x1 = r1.step(x1, 2 * x1);
    ASSERT_NEAR(w.data()[0], x0, 1e-12);
    ASSERT_NEAR(w.data()[1], x1, 1e-12);
  }
  EXPECT_EQ(state.step_count, 50u);
  EXPECT_LT(std::abs(x0), 1.5);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  nn::ParameterSet ps;
  Rng rng(1);
  ad::Tensor w = ps.add("w", {1, 1}, rng);
  const double before = w.data()[0];
  optim::OptimizerState state;
  state.config.learning_rate = 0.01;
  ps.zero_grad();
  ad::backward(ad::scale(ad::sum(w), 3.0));
  optim::adam_step(ps, state);
  EXPECT_NEAR(before - w.data()[0], 0.01, 1e-8);
}

TEST(Adam, RejectsMissingGradientAndBadConfig) {
  nn::ParameterSet ps;
  Rng rng(1);
  ps.add("w", {1, 1}, rng);
  optim::OptimizerState state;
  EXPECT_THROW(optim::adam_step(ps, state), ContractError);
  state.config.learning_rate = -1;
  EXPECT_THROW(state.config.validate(), ContractError);
}

TEST(ParameterSet, ClipGradNormScalesToBound) {
  nn::ParameterSet ps;
  Rng rng(1);
  ad::Tensor w = ps.add("w", {1, 2}, rng);
  ps.zero_grad();
  w.grad_buffer() = {3.0, 4.0};
  EXPECT_NEAR(ps.grad_norm(), 5.0, 1e-12);
  ps.clip_grad_norm(1.0);
  EXPECT_NEAR(w.grad()[0], 0.6, 1e-12);
  EXPECT_NEAR(w.grad()[1], 0.8, 1e-12);
  ps.clip_grad_norm(10.0);
  EXPECT_NEAR(w.grad()[0], 0.6, 1e-12);
}

TEST(ParameterSet, DuplicateNamesRejected) {
  nn::ParameterSet ps;
  Rng rng(1);
  ps.add("w", {1, 1}, rng);
  EXPECT_ANY_THROW(ps.add("w", {1, 1}, rng));
  EXPECT_TRUE(ps.contains("w"));
  EXPECT_EQ(ps.scalar_count(), 1u);
}

}  // namespace
}  // namespace flowplan
