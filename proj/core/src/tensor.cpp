// Copyright 2026 The flowplan Authors
// SPDX-License-Identifier: Apache-2.0

#include "flowplan/tensor.hpp"

#include <unordered_set>

#include "flowplan/error.hpp"

namespace flowplan::ad {

namespace {
thread_local bool g_grad_enabled = true;
}

std::string Shape::str() const {
  return "[" + std::to_string(rows) + "x" + std::to_string(cols) + "]";
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(shape, 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  return from(shape, std::vector<double>(shape.numel(), value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape.rows == 0 || shape.cols == 0) throw ShapeError("tensor dimensions must be positive, got " + shape.str());
  if (values.size() != shape.numel()) {
    throw ShapeError("tensor " + shape.str() + " needs " + std::to_string(shape.numel()) + " values, got " +
                     std::to_string(values.size()));
  }
  auto node = std::make_shared<Node>();
  node->shape = shape;
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({1, 1}, {value}, requires_grad); }

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on non-scalar tensor " + shape().str());
  return node_->value[0];
}

void Tensor::zero_grad() { node_->grad.assign(node_->value.size(), 0.0); }

Tensor Tensor::detach() const { return from(shape(), node_->value, false); }

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward() needs a scalar loss, got " + (loss.defined() ? loss.shape().str() : "undefined"));
  }
  const NodePtr& root = loss.node();
  if (root->released) throw ContractError("backward() called twice on the same graph");
  if (!root->requires_grad) throw ContractError("backward() on a loss that does not require grad");

  // Iterative post-order DFS gives a topological order (inputs before outputs).
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.get(), 0}};
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* node : order) {
    if (node->backward_fn) node->grad.assign(node->value.size(), 0.0);
  }
  root->ensure_grad();
  root->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (!node->backward_fn) continue;
    for (auto& parent : node->parents) {
      if (parent->requires_grad) parent->ensure_grad();
    }
    node->backward_fn(*node);
  }
  for (Node* node : order) {
    if (!node->backward_fn) continue;
    node->backward_fn = nullptr;
    node->parents.clear();
    node->released = true;
  }
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() noexcept { return g_grad_enabled; }

}  // namespace flowplan::ad
