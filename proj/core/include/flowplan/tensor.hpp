// Copyright 2026 The flowplan Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace flowplan::ad {

/// Row-major matrix shape. Vectors are 1×n, scalars 1×1.
struct Shape {
  std::size_t rows = 1;
  std::size_t cols = 1;

  std::size_t numel() const noexcept { return rows * cols; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

struct Node;
using NodePtr = std::shared_ptr<Node>;

/// One recorded value in the computation graph. Leaves own parameters or
/// inputs; interior nodes carry the local backward rule that scatters their
/// gradient into their parents.
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  bool released = false;
  std::vector<NodePtr> parents;
  std::function<void(Node&)> backward_fn;

  bool is_leaf() const noexcept { return !backward_fn && parents.empty(); }
  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

/// Shared handle to a graph node, 64-bit floats throughout.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const noexcept { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t rows() const { return node_->shape.rows; }
  std::size_t cols() const { return node_->shape.cols; }
  std::size_t numel() const { return node_->shape.numel(); }

  std::span<const double> data() const { return node_->value; }
  std::span<double> mutable_data() { return node_->value; }
  double at(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }
  double item() const;

  bool requires_grad() const { return node_->requires_grad; }
  /// Gradient buffer; empty until backward reaches this node or zero_grad runs.
  std::span<const double> grad() const { return node_->grad; }
  std::vector<double>& grad_buffer() { return node_->grad; }
  void zero_grad();

  /// Copy of the value cut loose from the graph.
  Tensor detach() const;

  const NodePtr& node() const { return node_; }

 private:
  NodePtr node_;
};

/// Runs reverse-mode accumulation from a 1×1 loss. Every requires_grad leaf
/// reachable from the loss receives d(loss)/d(leaf) added to its grad. The
/// interior graph is released afterwards; a second call on the same loss
/// throws ContractError.
void backward(const Tensor& loss);

/// While alive on a thread, ops on that thread record no graph.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled() noexcept;

}  // namespace flowplan::ad
