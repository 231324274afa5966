#include "advbiom/nn/autograd.hpp"

#include <stdexcept>
#include <unordered_set>

#include "advbiom/core/image.hpp"

namespace advbiom::nn {

namespace {
thread_local bool g_grad_enabled = true;
}

Tensor& Node::grad_buffer() {
  if (grad.empty()) grad = Tensor(value.shape(), 0.0);
  return grad;
}

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

void Var::zero_grad() const {
  if (node_) node_->grad = Tensor();
}

void Var::backward() const {
  if (node_->value.size() != 1) {
    throw ShapeError("backward() without seed needs a single-element output, got " +
                     to_string(node_->value.shape()));
  }
  backward(Tensor(node_->value.shape(), 1.0));
}

void Var::backward(const Tensor& seed) const {
  if (!node_->requires_grad) return;
  if (seed.size() != node_->value.size()) {
    throw ShapeError("backward seed shape " + to_string(seed.shape()) + " vs output " +
                     to_string(node_->value.shape()));
  }
  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->inputs.size()) {
      Node* child = n->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.push_back({child, 0});
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  node_->grad_buffer().accumulate(seed);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && !n->grad.empty()) {
      n->backward(*n);
    }
    // Interior gradients are consumed; leaves (parameters) keep theirs.
    if (!n->inputs.empty()) n->grad = Tensor();
  }
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

Var make_result(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward) {
  bool needs = false;
  if (g_grad_enabled) {
    for (const auto& v : inputs) needs = needs || v.requires_grad();
  }
  Var out(std::move(value), needs);
  if (needs) {
    auto& node = *out.node();
    node.inputs.reserve(inputs.size());
    for (auto& v : inputs) node.inputs.push_back(v.node());
    node.backward = std::move(backward);
  }
  return out;
}

}  // namespace advbiom::nn
