#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nest/error.hpp"

namespace nest {

using Shape = std::vector<std::int64_t>;

std::int64_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// A recorded value in the autodiff graph. Leaves have no parents; every
// op result holds its inputs and a rule that pushes `grad` into them.
template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;
  bool requires_grad = false;
  std::string_view op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  bool is_leaf() const { return parents.empty(); }

  // Lazily allocates a zero gradient buffer.
  std::vector<T>& grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), T(0));
    return grad;
  }
};

// Gradient recording is on by default; NoGradGuard turns it off for the
// current thread (inference, optimizer updates, finite differences).
bool grad_enabled() noexcept;

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <typename T>
class BasicTensor {
 public:
  using value_type = T;
  using NodePtr = std::shared_ptr<Node<T>>;

  BasicTensor() = default;
  explicit BasicTensor(NodePtr node) : node_(std::move(node)) {}

  static BasicTensor from_vector(Shape shape, std::vector<T> values, bool requires_grad = false);
  static BasicTensor full(Shape shape, T value, bool requires_grad = false);
  static BasicTensor zeros(Shape shape, bool requires_grad = false) {
    return full(std::move(shape), T(0), requires_grad);
  }
  static BasicTensor ones(Shape shape, bool requires_grad = false) {
    return full(std::move(shape), T(1), requires_grad);
  }
  static BasicTensor scalar(T value, bool requires_grad = false) {
    return from_vector({}, {value}, requires_grad);
  }

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const { return node().shape; }
  std::int64_t rank() const { return static_cast<std::int64_t>(shape().size()); }
  std::int64_t numel() const { return static_cast<std::int64_t>(node().value.size()); }
  // Negative axes count from the end.
  std::int64_t dim(std::int64_t axis) const;

  std::span<const T> values() const { return node().value; }
  // Direct write access; only meaningful for leaves (initialization,
  // optimizer updates, finite-difference probes).
  std::span<T> mutable_values() { return node().value; }
  T item() const;
  T at(std::initializer_list<std::int64_t> index) const;

  bool requires_grad() const { return node().requires_grad; }
  BasicTensor& set_requires_grad(bool flag);
  bool has_grad() const { return !node().grad.empty(); }
  std::span<const T> grad() const { return node().grad; }
  std::span<T> mutable_grad() { return node().grad_buffer(); }
  BasicTensor grad_tensor() const;
  void zero_grad() { node().grad.clear(); }

  bool is_leaf() const { return node().is_leaf(); }
  std::string_view op() const { return node().op; }

  // Reverse-mode sweep from this scalar root.
  void backward() const;

  BasicTensor detach() const { return from_vector(shape(), node().value, false); }

  template <typename U>
  BasicTensor<U> cast() const {
    std::vector<U> out(node().value.begin(), node().value.end());
    return BasicTensor<U>::from_vector(shape(), std::move(out), requires_grad() && is_leaf());
  }

  const NodePtr& node_ptr() const { return node_; }
  Node<T>& node() const {
    if (!node_) throw ContractError("use of an undefined tensor");
    return *node_;
  }

 private:
  NodePtr node_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

// Topologically ordered record of every grad-requiring node reachable
// from a root. Parents always precede children.
template <typename T>
class Tape {
 public:
  explicit Tape(const BasicTensor<T>& root);

  std::span<Node<T>* const> nodes() const { return order_; }
  std::size_t size() const { return order_.size(); }
  // Index of a node in the recorded order, or size() when absent.
  std::size_t position(const Node<T>* node) const;

  // Seeds d(root)/d(root) = 1 and applies every backward rule once, in
  // reverse order. Intermediate gradients are reset first; leaf
  // gradients accumulate across calls.
  void backward();

 private:
  std::vector<Node<T>*> order_;
  Node<T>* root_;
};

template <typename T>
void backward(const BasicTensor<T>& root) {
  Tape<T>(root).backward();
}

template <typename T>
void BasicTensor<T>::backward() const {
  nest::backward(*this);
}

}  // namespace nest
