#include "nest/tensor.hpp"

#include <numeric>
#include <sstream>
#include <unordered_map>

namespace nest {

namespace {
thread_local bool g_grad_enabled = true;
}  // namespace

std::int64_t numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto extent : shape) n *= extent;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream out;
  out << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ", ";
    out << shape[i];
  }
  out << ')';
  return out.str();
}

bool grad_enabled() noexcept { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <typename T>
BasicTensor<T> BasicTensor<T>::from_vector(Shape shape, std::vector<T> values, bool requires_grad) {
  for (auto extent : shape) {
    if (extent <= 0) throw DimensionError("non-positive extent in shape " + shape_str(shape));
  }
  if (nest::numel(shape) != static_cast<std::int64_t>(values.size())) {
    throw DimensionError("shape " + shape_str(shape) + " holds " + std::to_string(nest::numel(shape)) +
                         " elements but " + std::to_string(values.size()) + " were given");
  }
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return BasicTensor(std::move(node));
}

template <typename T>
BasicTensor<T> BasicTensor<T>::full(Shape shape, T value, bool requires_grad) {
  const auto n = nest::numel(shape);
  return from_vector(std::move(shape), std::vector<T>(static_cast<std::size_t>(n), value), requires_grad);
}

template <typename T>
std::int64_t BasicTensor<T>::dim(std::int64_t axis) const {
  const auto r = rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(shape()));
  }
  return shape()[static_cast<std::size_t>(axis)];
}

template <typename T>
T BasicTensor<T>::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
  return node().value[0];
}

template <typename T>
T BasicTensor<T>::at(std::initializer_list<std::int64_t> index) const {
  const auto& s = shape();
  if (index.size() != s.size()) throw DimensionError("index rank mismatch for shape " + shape_str(s));
  std::int64_t flat = 0;
  std::size_t axis = 0;
  for (auto i : index) {
    if (i < 0 || i >= s[axis]) throw DimensionError("index out of range for shape " + shape_str(s));
    flat = flat * s[axis] + i;
    ++axis;
  }
  return node().value[static_cast<std::size_t>(flat)];
}

template <typename T>
BasicTensor<T>& BasicTensor<T>::set_requires_grad(bool flag) {
  if (!is_leaf()) throw ContractError("requires_grad can only be set on leaf tensors");
  node().requires_grad = flag;
  return *this;
}

template <typename T>
BasicTensor<T> BasicTensor<T>::grad_tensor() const {
  if (!has_grad()) return zeros(shape());
  return from_vector(shape(), node().grad);
}

template <typename T>
Tape<T>::Tape(const BasicTensor<T>& root) : root_(&root.node()) {
  if (root.numel() != 1) {
    throw ContractError("backward requires a scalar root, got shape " + shape_str(root.shape()));
  }
  if (!root_->requires_grad) return;
  // Iterative post-order DFS; emits each node after all of its parents.
  std::unordered_map<const Node<T>*, bool> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(root_, 0);
  seen[root_] = true;
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* parent = node->parents[next++].get();
      if (parent && parent->requires_grad && !seen.count(parent)) {
        seen[parent] = true;
        stack.emplace_back(parent, 0);
      }
      continue;
    }
    order_.push_back(node);
    stack.pop_back();
  }
}

template <typename T>
std::size_t Tape<T>::position(const Node<T>* node) const {
  for (std::size_t i = 0; i < order_.size(); ++i) {
    if (order_[i] == node) return i;
  }
  return order_.size();
}

template <typename T>
void Tape<T>::backward() {
  if (order_.empty()) return;
  for (Node<T>* node : order_) {
    if (!node->is_leaf()) node->grad.assign(node->value.size(), T(0));
  }
  root_->grad_buffer()[0] += T(1);
  for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
    Node<T>* node = *it;
    if (!node->is_leaf() && node->backward) node->backward(*node);
  }
}

template class BasicTensor<float>;
template class BasicTensor<double>;
template class Tape<float>;
template class Tape<double>;

}  // namespace nest
