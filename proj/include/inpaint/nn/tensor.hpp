#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace inpaint::nn {

using Shape = std::vector<std::int64_t>;

std::int64_t numel(const Shape &shape);
std::string shape_text(const Shape &shape);

/// One vertex of the reverse-mode tape. Nodes are created by ops; a node
/// keeps its parents alive, so dropping the loss frees the whole graph.
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad; ///< empty until first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  /// Reads this node's grad and accumulates into its parents' grads.
  std::function<void(Node &)> backward_fn;

  bool is_leaf() const { return !backward_fn; }
  std::vector<double> &ensure_grad();
};

/// Dense row-major array of doubles with optional gradient tracking.
///
/// A Tensor is a shared handle: copies alias the same storage. Compute is
/// 64-bit throughout; persisted state is rounded to float32 at the
/// optimizer boundary (see adam.hpp).
class Tensor {
public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape &shape() const { return node_->shape; }
  std::int64_t dim(int axis) const;
  int rank() const { return static_cast<int>(node_->shape.size()); }
  std::int64_t numel() const { return static_cast<std::int64_t>(node_->value.size()); }

  std::span<double> values() { return node_->value; }
  std::span<const double> values() const { return node_->value; }
  double item() const;

  /// Gradient view; allocated (zeroed) on first access.
  std::span<double> grad();
  std::span<const double> grad() const;
  bool has_grad() const { return !node_->grad.empty(); }
  void zero_grad();

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool flag) { node_->requires_grad = flag; }

  /// New leaf holding a copy of the values, cut from the graph.
  Tensor detach() const;

  const std::shared_ptr<Node> &node() const { return node_; }
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

private:
  std::shared_ptr<Node> node_;
};

/// While alive, ops record no graph (inference and sampling).
class NoGradGuard {
public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard &) = delete;
  NoGradGuard &operator=(const NoGradGuard &) = delete;

private:
  bool previous_;
};

bool grad_enabled();

/// Builds an op result. `backward` is attached only when some parent
/// requires a gradient.
Tensor make_result(Shape shape, std::vector<double> value, std::vector<Tensor> parents,
                   std::function<void(Node &)> backward);

/// Reverse pass from a one-element loss. Leaf gradients accumulate across
/// calls; interior gradients are reset each call. Throws NonScalarLoss.
void backward(const Tensor &loss);

/// Throws NonFiniteLoss if any value is NaN or infinite.
void check_finite(const Tensor &t, const char *what);

} // namespace inpaint::nn
