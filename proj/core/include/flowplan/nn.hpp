// Copyright 2026 The flowplan Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <utility>
#include <vector>

#include "flowplan/ops.hpp"
#include "flowplan/rng.hpp"
#include "flowplan/tensor.hpp"

namespace flowplan::nn {

using ad::Shape;
using ad::Tensor;

/// Named, insertion-ordered trainable tensors of one model.
class ParameterSet {
 public:
  /// Xavier-uniform weights; pass `zero = true` for biases and zero-init heads.
  Tensor add(const std::string& name, Shape shape, Rng& rng, bool zero = false);

  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
  Tensor get(const std::string& name) const;
  bool contains(const std::string& name) const;
  std::size_t scalar_count() const;

  void zero_grad();
  double grad_norm() const;
  /// Scales all gradients so their global L2 norm is at most `max_norm`.
  /// Returns the norm before clipping.
  double clip_grad_norm(double max_norm);

  /// Overwrites every value from `other` (names and shapes must match).
  void copy_values_from(const ParameterSet& other);

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
};

struct Linear {
  Tensor weight;  // in × out
  Tensor bias;    // 1 × out

  Linear() = default;
  Linear(ParameterSet& params, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
         bool zero_init = false);
  Tensor operator()(const Tensor& x) const;
  /// Same values, no gradient path back to the parameters.
  Linear detached() const;
};

/// Two-layer perceptron with SiLU hidden activation.
struct Mlp {
  Linear hidden;
  Linear out;

  Mlp() = default;
  Mlp(ParameterSet& params, const std::string& name, std::size_t in, std::size_t width, std::size_t out_dim,
      Rng& rng, bool zero_out = false);
  Tensor operator()(const Tensor& x) const;
  Mlp detached() const;
};

/// Single-head attention with learned query/key/value/output projections.
struct CrossAttention {
  Linear query, key, value, out;

  CrossAttention() = default;
  CrossAttention(ParameterSet& params, const std::string& name, std::size_t query_dim, std::size_t kv_dim,
                 std::size_t width, Rng& rng, bool zero_out = false);
  /// Returns the projected attention output; attention weights land in `weights` when given.
  Tensor operator()(const Tensor& queries, const Tensor& context, Tensor* weights = nullptr) const;
  CrossAttention detached() const;
};

/// Residual cross-attention followed by a residual feed-forward layer.
struct AttentionBlock {
  CrossAttention attention;
  Mlp feed_forward;

  AttentionBlock() = default;
  AttentionBlock(ParameterSet& params, const std::string& name, std::size_t dim, std::size_t kv_dim, Rng& rng,
                 bool zero_out = false);
  Tensor operator()(const Tensor& queries, const Tensor& context) const;
  AttentionBlock detached() const;
};

}  // namespace flowplan::nn
