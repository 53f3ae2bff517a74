#pragma once

// Dense f32 matrices with reverse-mode differentiation.
//
// A Tensor is a cheap handle onto a graph node. Operations whose inputs
// require gradients record a backward rule and their parents; backward()
// orders the reachable nodes topologically and runs the rules once each.
// Every tensor is rank 1 or 2; rank-1 tensors behave as 1 x n rows.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace tabpfn::numerics {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<float> value;
  std::vector<float> grad;  // sized lazily on first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  std::size_t rows() const { return shape.size() == 2 ? shape[0] : 1; }
  std::size_t cols() const { return shape.empty() ? 0 : shape.back(); }
  std::vector<float>& ensure_grad();
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, float value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<float> values, bool requires_grad = false);
  static Tensor scalar(float value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rows() const;
  std::size_t cols() const;
  std::size_t size() const;

  std::span<const float> data() const;
  // Parameters are updated in place by the optimizer; nothing else writes here.
  std::span<float> mutable_data();

  /// Empty when no gradient has reached this tensor.
  std::span<const float> grad() const;
  std::span<float> mutable_grad();
  void zero_grad();

  bool requires_grad() const;
  void set_requires_grad(bool flag);

  float item() const;
  float at(std::size_t r, std::size_t c) const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Disables graph recording on the current thread for its lifetime.
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

/// Statistics of the last backward pass on this thread, for tests.
struct BackwardStats {
  std::size_t nodes_visited = 0;
  std::size_t rules_run = 0;
};

/// Propagates d(loss)/d(x) into every reachable tensor that requires grad.
/// Gradients accumulate into leaves; the recorded graph is released afterwards.
BackwardStats backward(const Tensor& loss);

}  // namespace tabpfn::numerics
