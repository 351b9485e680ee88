// Copyright 2026 The flowplan Authors
// SPDX-License-Identifier: Apache-2.0

#include "flowplan/nn.hpp"

#include <algorithm>
#include <cmath>

#include "flowplan/error.hpp"

namespace flowplan::nn {

Tensor ParameterSet::add(const std::string& name, Shape shape, Rng& rng, bool zero) {
  if (contains(name)) throw ContractError("duplicate parameter name: " + name);
  std::vector<double> values(shape.numel(), 0.0);
  if (!zero) {
    const double bound = std::sqrt(6.0 / static_cast<double>(shape.rows + shape.cols));
    for (double& v : values) v = rng.uniform(-bound, bound);
  }
  Tensor t = Tensor::from(shape, std::move(values), true);
  entries_.emplace_back(name, t);
  return t;
}

Tensor ParameterSet::get(const std::string& name) const {
  for (const auto& [key, t] : entries_)
    if (key == name) return t;
  throw ContractError("unknown parameter: " + name);
}

bool ParameterSet::contains(const std::string& name) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const auto& e) { return e.first == name; });
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.second.numel();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& e : entries_) e.second.zero_grad();
}

double ParameterSet::grad_norm() const {
  double total = 0.0;
  for (const auto& e : entries_)
    for (double g : e.second.grad()) total += g * g;
  return std::sqrt(total);
}

double ParameterSet::clip_grad_norm(double max_norm) {
  const double norm = grad_norm();
  if (norm > max_norm && norm > 0.0) {
    const double factor = max_norm / norm;
    for (auto& e : entries_)
      for (double& g : e.second.grad_buffer()) g *= factor;
  }
  return norm;
}

void ParameterSet::copy_values_from(const ParameterSet& other) {
  if (other.entries_.size() != entries_.size()) throw ShapeError("parameter sets differ in size");
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    auto& [name, t] = entries_[i];
    const auto& [oname, ot] = other.entries_[i];
    if (name != oname || t.shape() != ot.shape()) throw ShapeError("parameter mismatch at " + name);
    std::copy(ot.data().begin(), ot.data().end(), t.mutable_data().begin());
  }
}

Linear::Linear(ParameterSet& params, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
               bool zero_init)
    : weight(params.add(name + ".weight", {in, out}, rng, zero_init)),
      bias(params.add(name + ".bias", {1, out}, rng, true)) {}

Tensor Linear::operator()(const Tensor& x) const { return ad::add(ad::matmul(x, weight), bias); }

Mlp::Mlp(ParameterSet& params, const std::string& name, std::size_t in, std::size_t width, std::size_t out_dim,
         Rng& rng, bool zero_out)
    : hidden(params, name + ".hidden", in, width, rng), out(params, name + ".out", width, out_dim, rng, zero_out) {}

Tensor Mlp::operator()(const Tensor& x) const { return out(ad::silu(hidden(x))); }

CrossAttention::CrossAttention(ParameterSet& params, const std::string& name, std::size_t query_dim,
                               std::size_t kv_dim, std::size_t width, Rng& rng, bool zero_out)
    : query(params, name + ".query", query_dim, width, rng),
      key(params, name + ".key", kv_dim, width, rng),
      value(params, name + ".value", kv_dim, width, rng),
      out(params, name + ".out", width, query_dim, rng, zero_out) {}

Tensor CrossAttention::operator()(const Tensor& queries, const Tensor& context, Tensor* weights) const {
  auto result = ad::softmax_attention(query(queries), key(context), value(context));
  if (weights != nullptr) *weights = result.weights;
  return out(result.output);
}

AttentionBlock::AttentionBlock(ParameterSet& params, const std::string& name, std::size_t dim, std::size_t kv_dim,
                               Rng& rng, bool zero_out)
    : attention(params, name + ".attn", dim, kv_dim, dim, rng, zero_out),
      feed_forward(params, name + ".ffn", dim, 2 * dim, dim, rng, zero_out) {}

Tensor AttentionBlock::operator()(const Tensor& queries, const Tensor& context) const {
  Tensor x = ad::add(queries, attention(queries, context));
  return ad::add(x, feed_forward(x));
}

Linear Linear::detached() const {
  Linear copy;
  copy.weight = weight.detach();
  copy.bias = bias.detach();
  return copy;
}

Mlp Mlp::detached() const {
  Mlp copy;
  copy.hidden = hidden.detached();
  copy.out = out.detached();
  return copy;
}

CrossAttention CrossAttention::detached() const {
  CrossAttention copy;
  copy.query = query.detached();
  copy.key = key.detached();
  copy.value = value.detached();
  copy.out = out.detached();
  return copy;
}

AttentionBlock AttentionBlock::detached() const {
  AttentionBlock copy;
  copy.attention = attention.detached();
  copy.feed_forward = feed_forward.detached();
  return copy;
}

}  // namespace flowplan::nn
