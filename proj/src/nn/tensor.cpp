#include "inpaint/nn/tensor.hpp"

#include <cmath>
#include <sstream>
#include <unordered_set>

#include "inpaint/error.hpp"

namespace inpaint::nn {

std::int64_t numel(const Shape &shape) {
  std::int64_t n = 1;
  for (auto d : shape) {
    n *= d;
  }
  return n;
}

std::string shape_text(const Shape &shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    os << (i ? "," : "") << shape[i];
  }
  os << "]";
  return os.str();
}

std::vector<double> &Node::ensure_grad() {
  if (grad.empty()) {
    grad.assign(value.size(), 0.0);
  }
  return grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  for (auto d : shape) {
    if (d < 1) {
      fail(ErrorCode::ShapeMismatch, "tensor extents must be positive: " + shape_text(shape));
    }
  }
  auto node = std::make_shared<Node>();
  node->value.assign(static_cast<std::size_t>(nn::numel(shape)), value);
  node->shape = std::move(shape);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (static_cast<std::int64_t>(values.size()) != nn::numel(shape)) {
    fail(ErrorCode::ShapeMismatch, "value count " + std::to_string(values.size()) +
                                       " does not match shape " + shape_text(shape));
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({1}, {value}, requires_grad);
}

std::int64_t Tensor::dim(int axis) const {
  const int r = rank();
  if (axis < 0) {
    axis += r;
  }
  if (axis < 0 || axis >= r) {
    fail(ErrorCode::IndexOutOfRange, "axis out of range for " + shape_text(shape()));
  }
  return node_->shape[static_cast<std::size_t>(axis)];
}

double Tensor::item() const {
  if (node_->value.size() != 1) {
    fail(ErrorCode::ShapeMismatch, "item() on tensor of shape " + shape_text(shape()));
  }
  return node_->value[0];
}

std::span<double> Tensor::grad() { return node_->ensure_grad(); }

std::span<const double> Tensor::grad() const { return node_->ensure_grad(); }

void Tensor::zero_grad() {
  if (!node_->grad.empty()) {
    std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
  }
}

Tensor Tensor::detach() const { return from(node_->shape, node_->value, false); }

namespace {
thread_local bool g_grad_enabled = true;
} // namespace

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

Tensor make_result(Shape shape, std::vector<double> value, std::vector<Tensor> parents,
                   std::function<void(Node &)> backward) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  bool any = false;
  if (g_grad_enabled) {
    for (const auto &p : parents) {
      any = any || p.requires_grad();
    }
  }
  if (any) {
    node->requires_grad = true;
    node->parents.reserve(parents.size());
    for (auto &p : parents) {
      node->parents.push_back(p.node());
    }
    node->backward_fn = std::move(backward);
  }
  return Tensor(std::move(node));
}

void backward(const Tensor &loss) {
  if (loss.numel() != 1) {
    fail(ErrorCode::NonScalarLoss, "backward needs a one-element loss, got " +
                                       shape_text(loss.shape()));
  }
  if (!loss.requires_grad()) {
    return;
  }
  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<Node *> order;
  std::unordered_set<Node *> seen;
  std::vector<std::pair<Node *, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto &[node, next] = stack.back();
    if (next < node->parents.size()) {
      Node *parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  for (Node *n : order) {
    if (!n->is_leaf()) {
      n->grad.assign(n->value.size(), 0.0);
    }
  }
  loss.node()->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node *n = *it;
    if (!n->is_leaf()) {
      n->backward_fn(*n);
    }
  }
}

void check_finite(const Tensor &t, const char *what) {
  for (double v : t.values()) {
    if (!std::isfinite(v)) {
      fail(ErrorCode::NonFiniteLoss, std::string(what) + " is not finite");
    }
  }
}

} // namespace inpaint::nn
