// Copyright 2026 The flowplan Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <vector>

#include "flowplan/tensor.hpp"

namespace flowplan::ad {

// Linear algebra.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// Elementwise. `add` and `sub` broadcast a 1×n right operand over rows.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor silu(const Tensor& a);
Tensor tanh(const Tensor& a);

// Row-wise softmax; each output row sums to one.
Tensor softmax_rows(const Tensor& a);

// Layout.
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t count);
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count);
Tensor reshape(const Tensor& a, Shape shape);

// Reductions, all to 1×1 except mean_rows (to 1×cols).
Tensor mean_rows(const Tensor& a);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor add_scalars(const std::vector<Tensor>& terms, const std::vector<double>& weights);

// Losses. Targets participate in the graph unless the caller detaches them.
Tensor mse(const Tensor& prediction, const Tensor& target);
Tensor l1_mean(const Tensor& prediction, const Tensor& target);
Tensor cross_entropy(const Tensor& logits, std::size_t label);

/// Rescales each consecutive displacement of an H×2 polyline that starts at
/// the origin so that no step exceeds `max_step`. Steps already inside the
/// bound pass through with identity gradient.
Tensor clamp_step_length(const Tensor& waypoints, double max_step);

struct AttentionResult {
  Tensor output;   // nq × dv
  Tensor weights;  // nq × nk, rows sum to one
};

/// softmax(q·kᵀ·scale)·v. `scale` <= 0 selects 1/sqrt(d).
AttentionResult softmax_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                                  double scale = 0.0);

}  // namespace flowplan::ad
