#include "mattnet/autodiff/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>
#include <unordered_set>

#include "mattnet/errors.hpp"

namespace mattnet::ad {

namespace {

std::atomic<std::uint64_t> next_seq{1};
thread_local bool recording = true;

std::shared_ptr<Node> new_node(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_size(shape) != values.size()) {
    throw DimensionError("tensor shape " + shape_to_string(shape) + " does not match " +
                         std::to_string(values.size()) + " values");
  }
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(values);
  n->requires_grad = requires_grad;
  n->seq = next_seq.fetch_add(1, std::memory_order_relaxed);
  return n;
}

}  // namespace

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) {
    if (d == 0) throw DimensionError("zero-sized dimension in shape " + shape_to_string(shape));
    n *= d;
  }
  return shape.empty() ? 0 : n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  return Tensor(new_node(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const std::size_t n = shape_size(shape);
  return from(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::filled(Shape shape, double v) {
  const std::size_t n = shape_size(shape);
  return from(std::move(shape), std::vector<double>(n, v));
}

Tensor Tensor::scalar(double v) { return from({1}, {v}); }

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return from({n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return from({rows, cols}, std::move(values));
}

std::size_t Tensor::rows() const {
  if (rank() != 2) throw DimensionError("rows() on tensor of shape " + shape_to_string(shape()));
  return node_->shape[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw DimensionError("cols() on tensor of shape " + shape_to_string(shape()));
  return node_->shape[1];
}

std::span<double> Tensor::mutable_values() {
  if (!node_->is_leaf) throw UsageError("mutable_values() on a non-leaf tensor");
  return node_->value;
}

double Tensor::item() const {
  if (size() != 1) throw UsageError("item() on tensor of shape " + shape_to_string(shape()));
  return node_->value[0];
}

double Tensor::at(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }

void Tensor::zero_grad() { node_->grad.assign(node_->value.size(), 0.0); }

void Tensor::clear_grad() {
  node_->grad.clear();
  node_->grad.shrink_to_fit();
}

NoGradGuard::NoGradGuard() : previous_(recording) { recording = false; }
NoGradGuard::~NoGradGuard() { recording = previous_; }

bool grad_enabled() { return recording; }

Tensor make_result(Shape shape, std::vector<double> value, std::vector<Tensor> inputs,
                   std::function<void(Node&)> backward_fn) {
  bool needs = false;
  if (recording) {
    for (const Tensor& t : inputs) needs = needs || t.requires_grad();
  }
  auto n = new_node(std::move(shape), std::move(value), needs);
  n->is_leaf = false;
  if (needs) {
    n->inputs.reserve(inputs.size());
    for (Tensor& t : inputs) n->inputs.push_back(t.node());
    n->backward_fn = std::move(backward_fn);
  }
  return Tensor(std::move(n));
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw UsageError("backward() requires a scalar loss, got shape " +
                     (loss.defined() ? shape_to_string(loss.shape()) : std::string("<undefined>")));
  }
  if (!loss.requires_grad()) return;

  // Reverse creation order is a valid topological order of the tape.
  std::vector<Node*> order;
  std::vector<Node*> stack{loss.node().get()};
  std::unordered_set<const Node*> seen{loss.node().get()};
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    order.push_back(n);
    for (const auto& in : n->inputs) {
      if (in->requires_grad && seen.insert(in.get()).second) stack.push_back(in.get());
    }
  }
  std::sort(order.begin(), order.end(), [](const Node* a, const Node* b) { return a->seq > b->seq; });

  for (Node* n : order) {
    if (n->is_leaf) {
      n->ensure_grad();
    } else {
      n->grad.assign(n->value.size(), 0.0);
    }
  }
  order.front()->grad[0] += 1.0;
  for (Node* n : order) {
    if (n->backward_fn) n->backward_fn(*n);
  }
}

}  // namespace mattnet::ad
