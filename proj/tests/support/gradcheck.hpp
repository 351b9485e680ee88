// Copyright 2026 The flowplan Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "flowplan/rng.hpp"
#include "flowplan/tensor.hpp"

namespace flowplan::testing {

struct GradCase {
  std::string name;
  double rel_error = 0.0;   // ‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖)
  std::size_t checked = 0;  // scalar entries compared
};

/// Compares backprop gradients of `loss_fn` with central differences.
/// `loss_fn` must rebuild the loss from the current leaf values each call.
/// At most `per_leaf` entries of each leaf are probed (0 = all).
GradCase check_gradients(const std::string& name, const std::function<ad::Tensor()>& loss_fn,
                         std::vector<ad::Tensor> leaves, Rng& rng, std::size_t per_leaf = 0, double h = 1e-5);

/// sum(out ⊙ weights): a scalar whose gradient wrt `out` is `weights`.
ad::Tensor probe(const ad::Tensor& out, const ad::Tensor& weights);
ad::Tensor random_tensor(ad::Shape shape, Rng& rng, double scale = 1.0, bool requires_grad = false);

/// Every op and learned block, `seeds` cases each.
std::vector<GradCase> run_gradient_suite(std::size_t seeds);

}  // namespace flowplan::testing
