// Copyright 2026 The flowplan Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "flowplan/ops.hpp"
#include "gradcheck.hpp"

namespace flowplan {
namespace {

TEST(Gradients, EveryBlockMatchesFiniteDifferences) {
  for (const auto& c : testing::run_gradient_suite(2)) {
    EXPECT_LE(c.rel_error, 1e-4) << c.name;
    EXPECT_GT(c.checked, 0u) << c.name;
  }
}

TEST(Gradients, CheckerDetectsAWrongGradient) {
  Rng rng(1);
  ad::Tensor x = testing::random_tensor({2, 2}, rng, 1.0, true);
  // Forward uses the data, backward is broken by detaching half of the product.
  const auto c = testing::check_gradients("broken", [&] { return ad::sum(ad::mul(x, x.detach())); }, {x}, rng);
  EXPECT_GT(c.rel_error, 0.1);
}

}  // namespace
}  // namespace flowplan
