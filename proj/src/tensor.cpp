#include "unicorn/tensor.hpp"

#include <cmath>
#include <unordered_set>

#include "unicorn/error.hpp"

namespace unicorn {

namespace {
thread_local bool g_grad_enabled = true;

std::shared_ptr<detail::Node> make_leaf(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape.size() > 3) fail(ErrorCode::kShape, "tensor rank must be <= 3, got " + shape_string(shape));
  if (shape_numel(shape) != values.size()) {
    fail(ErrorCode::kShape, "shape " + shape_string(shape) + " does not match " + std::to_string(values.size()) +
                                " values");
  }
  for (const double v : values) {
    if (!std::isfinite(v)) fail(ErrorCode::kNonFinite, "non-finite value in tensor construction");
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  node->requires_grad = requires_grad;
  if (requires_grad) node->grad.assign(node->data.size(), 0.0);
  return node;
}
}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (const auto e : shape) n *= e;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = shape_numel(shape);
  return Tensor(make_leaf(std::move(shape), std::vector<double>(n, value), requires_grad));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  return Tensor(make_leaf(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({}, {value}, requires_grad); }

double Tensor::item() const {
  if (numel() != 1) fail(ErrorCode::kShape, "item() on tensor of shape " + shape_string(shape()));
  return node_->data[0];
}

void Tensor::zero_grad() {
  if (node_->requires_grad) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::detach() const { return Tensor(make_leaf(node_->shape, node_->data, false)); }

std::vector<detail::Node*> topological_order(const Tensor& root) {
  std::vector<detail::Node*> order;
  std::unordered_set<const detail::Node*> visited;
  // Iterative post-order DFS; graphs of a full model are deep enough that
  // recursion is not safe.
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      detail::Node* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;
}

void Tensor::backward() const {
  if (!defined() || numel() != 1) {
    fail(ErrorCode::kShape, "backward() requires a scalar loss, got " + (defined() ? shape_string(shape()) : "undefined"));
  }
  if (!node_->requires_grad) fail(ErrorCode::kInvalidArgument, "backward() on a tensor that does not require grad");
  const auto order = topological_order(*this);
  for (detail::Node* n : order) {
    if (!n->is_leaf()) n->grad.assign(n->data.size(), 0.0);
  }
  if (node_->is_leaf()) {
    node_->grad[0] += 1.0;
    return;
  }
  node_->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (n->backward) n->backward(*n);
  }
  // Interior buffers are not needed after propagation.
  for (detail::Node* n : order) {
    if (!n->is_leaf()) std::vector<double>().swap(n->grad);
  }
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

}  // namespace unicorn
