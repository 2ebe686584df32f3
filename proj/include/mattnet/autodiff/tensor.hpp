#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace mattnet::ad {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_to_string(const Shape& shape);

/// One recorded value in a computation graph. Interior nodes keep their
/// inputs alive and a closure that pushes `grad` back into them.
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until backward or zero_grad touches it
  bool requires_grad = false;
  bool is_leaf = true;
  std::uint64_t seq = 0;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_fn;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

/// Handle to a dense row-major float64 array. Copies share the node.
/// Scalars have shape {1}.
class Tensor {
 public:
  Tensor() = default;

  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor filled(Shape shape, double v);
  static Tensor scalar(double v);
  static Tensor vector(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->value.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> values() const { return node_->value; }
  /// Direct write access; only for leaf tensors (parameters, inputs).
  std::span<double> mutable_values();
  double item() const;
  double operator[](std::size_t i) const { return node_->value[i]; }
  double at(std::size_t r, std::size_t c) const;

  bool requires_grad() const { return node_->requires_grad; }
  bool is_leaf() const { return node_->is_leaf; }
  bool has_grad() const { return node_->grad.size() == node_->value.size() && !node_->value.empty(); }
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad() { return node_->grad; }
  /// Allocates a zero grad buffer (keeps "present" semantics).
  void zero_grad();
  /// Drops the grad buffer entirely.
  void clear_grad();

  const std::shared_ptr<Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<Node> node_;
};

/// Thread-local switch that stops graph recording (evaluation).
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

/// Builds an interior node. `backward` is only retained when recording is
/// enabled and some input requires grad.
Tensor make_result(Shape shape, std::vector<double> value, std::vector<Tensor> inputs,
                   std::function<void(Node&)> backward);

/// Reverse pass from a scalar. Leaf grads accumulate across calls; interior
/// grads are reset at the start of every call.
void backward(const Tensor& loss);

}  // namespace mattnet::ad
