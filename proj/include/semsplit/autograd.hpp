// SPDX-License-Identifier: Apache-2.0
#pragma once

// Minimal tape-free reverse-mode autodiff. Every Var owns a node holding its
// value; nodes that depend on trainable leaves also keep their parents and a
// backward closure. backward(root) walks the graph in reverse topological order.

#include <functional>
#include <memory>
#include <vector>

#include "semsplit/tensor.hpp"

namespace semsplit::ag {

struct Node {
  Tensor value;
  Tensor grad;  // empty until something flows into it
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  /// Gradient buffer, zero-initialised to the value's shape on first use.
  Tensor& grad_buffer();
  bool wants_grad() const { return requires_grad; }
};

using NodePtr = std::shared_ptr<Node>;

class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);
  explicit Var(NodePtr node) : node_(std::move(node)) {}

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  int dim(int i) const { return node_->value.dim(i); }
  std::size_t size() const { return node_->value.size(); }
  bool requires_grad() const { return node_->requires_grad; }

  /// Accumulated gradient of a leaf; a zero tensor when nothing reached it.
  /// Interior gradients are released during backward().
  Tensor grad() const;
  const NodePtr& node() const { return node_; }

 private:
  NodePtr node_;
};

/// Builds an interior node. `backward` receives the node itself; it is dropped
/// when no parent requires a gradient.
Var make_result(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward);

/// Runs reverse-mode accumulation from a single-element root (seed 1).
void backward(const Var& root);

/// Same value, cut from the graph.
Var detach(const Var& v);

inline Var constant(Tensor t) { return Var(std::move(t), false); }
inline Var parameter(Tensor t) { return Var(std::move(t), true); }

}  // namespace semsplit::ag
