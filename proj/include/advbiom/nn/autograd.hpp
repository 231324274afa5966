#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "advbiom/nn/tensor.hpp"

namespace advbiom::nn {

struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  /// Reads this->grad and accumulates into inputs' grads.
  std::function<void(Node&)> backward;

  /// Gradient buffer, zero-initialized on first use.
  Tensor& grad_buffer();
};

/// Handle to a node in a dynamically recorded computation graph.
class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);
  static Var parameter(Tensor value) { return Var(std::move(value), true); }

  const Tensor& value() const { return node_->value; }
  /// In-place access for optimizers; never call on a non-leaf node.
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  int dim(std::size_t axis) const { return node_->value.dim(axis); }
  std::size_t size() const { return node_->value.size(); }
  double item() const { return node_->value.item(); }

  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool has_grad() const { return node_ && !node_->grad.empty(); }
  /// Accumulated gradient; empty tensor if nothing flowed here.
  const Tensor& grad() const { return node_->grad; }
  void zero_grad() const;

  /// Reverse pass from a single-element output.
  void backward() const;
  void backward(const Tensor& seed) const;

  /// Same value, cut from the graph.
  Var detach() const { return Var(node_->value, false); }

  const std::shared_ptr<Node>& node() const { return node_; }
  bool defined() const { return static_cast<bool>(node_); }

 private:
  std::shared_ptr<Node> node_;
};

/// Disables graph recording on this thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

/// Wraps an op result. Records `backward` only when recording is on and some input
/// requires a gradient.
Var make_result(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward);

}  // namespace advbiom::nn
