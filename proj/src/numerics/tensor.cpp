#include "tabpfn/numerics/tensor.hpp"

#include <algorithm>
#include <functional>
#include <sstream>
#include <unordered_set>

#include "tabpfn/errors.hpp"

namespace tabpfn::numerics {

namespace {

thread_local bool g_grad_enabled = true;

std::size_t element_count(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

void check_rank(const Shape& shape) {
  if (shape.empty() || shape.size() > 2) {
    throw ContractError("tensors must have rank 1 or 2, got " + shape_string(shape));
  }
}

}  // namespace

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::vector<float>& detail::Node::ensure_grad() {
  if (grad.size() != value.size()) grad.assign(value.size(), 0.0f);
  return grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0f, requires_grad); }

Tensor Tensor::full(Shape shape, float value, bool requires_grad) {
  check_rank(shape);
  std::vector<float> values(element_count(shape), value);
  return from(std::move(shape), std::move(values), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<float> values, bool requires_grad) {
  check_rank(shape);
  if (values.size() != element_count(shape)) {
    throw ContractError("tensor data length " + std::to_string(values.size()) + " does not match shape " +
                        shape_string(shape));
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(float value, bool requires_grad) { return from({1, 1}, {value}, requires_grad); }

const Shape& Tensor::shape() const { return node_->shape; }
std::size_t Tensor::rows() const { return node_->rows(); }
std::size_t Tensor::cols() const { return node_->cols(); }
std::size_t Tensor::size() const { return node_->value.size(); }

std::span<const float> Tensor::data() const { return node_->value; }
std::span<float> Tensor::mutable_data() { return node_->value; }

std::span<const float> Tensor::grad() const { return node_->grad; }
std::span<float> Tensor::mutable_grad() { return node_->ensure_grad(); }

void Tensor::zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), 0.0f); }

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }
void Tensor::set_requires_grad(bool flag) { node_->requires_grad = flag; }

float Tensor::item() const {
  if (size() != 1) throw ContractError("item() on tensor of shape " + shape_string(shape()));
  return node_->value[0];
}

float Tensor::at(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

BackwardStats backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " +
                        (loss.defined() ? shape_string(loss.shape()) : std::string("<undefined>")));
  }
  BackwardStats stats;
  if (!loss.requires_grad()) return stats;

  // Iterative post-order DFS; reversed it is a topological order from the loss.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->ensure_grad()[0] += 1.0f;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* node = *it;
    ++stats.nodes_visited;
    if (node->backward && !node->grad.empty()) {
      node->backward(*node);
      ++stats.rules_run;
    }
  }
  // Release the recorded graph; leaves keep their accumulated gradients.
  for (detail::Node* node : order) {
    if (node->backward) {
      node->backward = nullptr;
      node->parents.clear();
      node->grad.clear();
      node->grad.shrink_to_fit();
    }
  }
  return stats;
}

}  // namespace tabpfn::numerics
