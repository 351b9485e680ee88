// Copyright 2026 The flowplan Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "flowplan/error.hpp"
#include "flowplan/ops.hpp"
#include "gradcheck.hpp"

namespace flowplan {
namespace {

using ad::Tensor;

TEST(Tensor, MatmulMatchesTripleLoop) {
  Rng rng(5);
  const Tensor a = testing::random_tensor({7, 5}, rng), b = testing::random_tensor({5, 3}, rng);
  const Tensor c = ad::matmul(a, b);
  ASSERT_EQ(c.shape(), (ad::Shape{7, 3}));
  for (std::size_t i = 0; i < 7; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      double ref = 0.0;
      for (std::size_t k = 0; k < 5; ++k) ref += a.at(i, k) * b.at(k, j);
      EXPECT_NEAR(c.at(i, j), ref, 1e-12);
    }
  }
}

TEST(Tensor, SoftmaxOfLogThreeGivesQuarterAndThreeQuarters) {
  const Tensor p = ad::softmax_rows(Tensor::from({1, 2}, {0.0, std::log(3.0)}));
  EXPECT_NEAR(p.at(0, 0), 0.25, 1e-12);
  EXPECT_NEAR(p.at(0, 1), 0.75, 1e-12);
}

TEST(Tensor, SoftmaxIsShiftInvariantAndStable) {
  const Tensor p = ad::softmax_rows(Tensor::from({1, 3}, {1000.0, 1001.0, 999.0}));
  const Tensor q = ad::softmax_rows(Tensor::from({1, 3}, {1.0, 2.0, 0.0}));
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(p.at(0, j), q.at(0, j), 1e-12);
}

TEST(Tensor, ShapeMismatchThrows) {
  EXPECT_THROW(ad::matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), ShapeError);
  EXPECT_THROW(ad::add(Tensor::zeros({2, 3}), Tensor::zeros({3, 2})), ShapeError);
  EXPECT_THROW(ad::reshape(Tensor::zeros({2, 3}), {4, 2}), ShapeError);
  EXPECT_THROW(Tensor::from({2, 2}, {1.0, 2.0}), ShapeError);
}

TEST(Tensor, BackwardTwiceOnSameGraphThrows) {
  Tensor x = Tensor::from({1, 2}, {1.0, 2.0}, true);
  const Tensor loss = ad::sum(ad::mul(x, x));
  ad::backward(loss);
  EXPECT_NEAR(x.grad()[0], 2.0, 1e-12);
  EXPECT_NEAR(x.grad()[1], 4.0, 1e-12);
  EXPECT_THROW(ad::backward(loss), ContractError);
}

TEST(Tensor, BackwardNeedsScalar) {
  Tensor x = Tensor::from({1, 2}, {1.0, 2.0}, true);
  EXPECT_THROW(ad::backward(ad::scale(x, 2.0)), ContractError);
}

TEST(Tensor, GradientsAccumulateAcrossBackwardCalls) {
  Tensor x = Tensor::from({1, 1}, {3.0}, true);
  ad::backward(ad::scale(x, 2.0));
  ad::backward(ad::scale(x, 5.0));
  EXPECT_DOUBLE_EQ(x.grad()[0], 7.0);
  x.zero_grad();
  EXPECT_DOUBLE_EQ(x.grad()[0], 0.0);
}

TEST(Tensor, NoGradGuardBuildsNoGraph) {
  Tensor x = Tensor::from({1, 1}, {3.0}, true);
  Tensor y;
  {
    ad::NoGradGuard guard;
    y = ad::scale(x, 2.0);
  }
  EXPECT_FALSE(y.requires_grad());
  EXPECT_TRUE(ad::scale(x, 2.0).requires_grad());
}

TEST(Tensor, DetachCutsTheGraph) {
  Tensor x = Tensor::from({1, 1}, {3.0}, true);
  const Tensor y = ad::scale(x, 2.0).detach();
  EXPECT_FALSE(y.requires_grad());
  EXPECT_DOUBLE_EQ(y.item(), 6.0);
}

TEST(Tensor, ClampLeavesShortStepsAlone) {
  const Tensor wp = Tensor::from({3, 2}, {0.5, 0.0, 1.0, 0.0, 1.5, 0.0});
  const Tensor out = ad::clamp_step_length(wp, 1.0);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_DOUBLE_EQ(out.data()[i], wp.data()[i]);
  const Tensor far = ad::clamp_step_length(Tensor::from({2, 2}, {3.0, 4.0, 3.0, 4.0}), 1.0);
  EXPECT_NEAR(far.at(0, 0), 0.6, 1e-12);
  EXPECT_NEAR(far.at(0, 1), 0.8, 1e-12);
  EXPECT_NEAR(far.at(1, 0), 0.6, 1e-12);
}

TEST(Tensor, CrossEntropyUniformIsLogN) {
  EXPECT_NEAR(ad::cross_entropy(Tensor::zeros({1, 6}), 2).item(), std::log(6.0), 1e-12);
  EXPECT_THROW(ad::cross_entropy(Tensor::zeros({1, 6}), 6), ContractError);
}

TEST(Tensor, AttentionRowsSumToOne) {
  Rng rng(2);
  const auto r = ad::softmax_attention(testing::random_tensor({3, 4}, rng), testing::random_tensor({5, 4}, rng),
                                       testing::random_tensor({5, 2}, rng));
  for (std::size_t i = 0; i < 3; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < 5; ++j) s += r.weights.at(i, j);
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

}  // namespace
}  // namespace flowplan
