#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "ntd/errors.hpp"

namespace ntd {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ']';
  return os.str();
}

namespace detail {
inline bool& grad_mode_flag() {
  thread_local bool enabled = true;
  return enabled;
}
}  // namespace detail

// Disables graph recording on this thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : prev_(detail::grad_mode_flag()) { detail::grad_mode_flag() = false; }
  ~NoGradGuard() { detail::grad_mode_flag() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

inline bool grad_enabled() { return detail::grad_mode_flag(); }

// Dense row-major tensor handle. Copies share the underlying node, so a
// parameter handle held by a module and the same handle captured in a graph
// refer to one value buffer and one gradient buffer.
template <typename T>
class Tensor {
 public:
  struct Node {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;  // empty until first accumulation
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;

    std::vector<T>& grad_buffer() {
      if (grad.empty()) grad.assign(value.size(), T(0));
      return grad;
    }
  };

  Tensor() = default;

  Tensor(Shape shape, std::vector<T> values, bool requires_grad = false)
      : node_(std::make_shared<Node>()) {
    if (shape_size(shape) != values.size()) {
      throw ShapeError("tensor: shape " + shape_str(shape) + " does not match " +
                       std::to_string(values.size()) + " values");
    }
    node_->shape = std::move(shape);
    node_->value = std::move(values);
    node_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    const auto n = shape_size(shape);
    return Tensor(std::move(shape), std::vector<T>(n, T(0)), requires_grad);
  }

  static Tensor scalar(T v) { return Tensor({1}, {v}); }

  static Tensor from_node(std::shared_ptr<Node> n) {
    Tensor t;
    t.node_ = std::move(n);
    return t;
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->value.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  // Rank-1 tensors behave as a single row.
  std::size_t rows() const { return rank() == 1 ? 1 : node_->shape[0]; }
  std::size_t cols() const { return rank() == 1 ? node_->shape[0] : node_->shape[1]; }

  std::span<const T> data() const { return node_->value; }
  // Mutation is reserved for parameter updates and test probes.
  std::span<T> mutable_data() { return node_->value; }
  const std::vector<T>& values() const { return node_->value; }

  T operator[](std::size_t i) const { return node_->value[i]; }
  T at(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }

  T item() const {
    if (size() != 1) throw ContractError("item(): tensor is not a scalar: " + shape_str(shape()));
    return node_->value[0];
  }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool r) { node_->requires_grad = r; }

  bool has_grad() const { return !node_->grad.empty(); }
  // Zero-filled when nothing has been accumulated yet.
  std::vector<T> grad() const {
    return node_->grad.empty() ? std::vector<T>(size(), T(0)) : node_->grad;
  }
  void zero_grad() { node_->grad.clear(); }

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& node_ptr() const { return node_; }

  // Fresh leaf holding a copy of the values, cut from any graph.
  Tensor detach() const { return Tensor(shape(), node_->value, false); }

 private:
  std::shared_ptr<Node> node_;
};

namespace detail {

// Builds an op result. The node records parents and the backward closure only
// when grad mode is on and some input requires grad.
template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> value,
                      std::initializer_list<Tensor<T>> inputs,
                      std::function<void(typename Tensor<T>::Node&)> backward) {
  auto node = std::make_shared<typename Tensor<T>::Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  bool needs = false;
  if (grad_enabled()) {
    for (const auto& in : inputs) needs = needs || in.requires_grad();
  }
  if (needs) {
    node->requires_grad = true;
    for (const auto& in : inputs) node->parents.push_back(in.node_ptr());
    node->backward = std::move(backward);
  }
  return Tensor<T>::from_node(std::move(node));
}

template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> value, const std::vector<Tensor<T>>& inputs,
                      std::function<void(typename Tensor<T>::Node&)> backward) {
  auto node = std::make_shared<typename Tensor<T>::Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  bool needs = false;
  if (grad_enabled()) {
    for (const auto& in : inputs) needs = needs || in.requires_grad();
  }
  if (needs) {
    node->requires_grad = true;
    for (const auto& in : inputs) node->parents.push_back(in.node_ptr());
    node->backward = std::move(backward);
  }
  return Tensor<T>::from_node(std::move(node));
}

// Parent gradient buffer, or nullptr when that parent does not need one.
template <typename T>
T* parent_grad(typename Tensor<T>::Node& self, std::size_t i) {
  auto& p = *self.parents[i];
  if (!p.requires_grad) return nullptr;
  return p.grad_buffer().data();
}

}  // namespace detail

// Reverse-mode sweep from a scalar loss. Gradients accumulate into every
// reachable tensor that requires grad; leaves keep them until zero_grad().
template <typename T>
void backward(const Tensor<T>& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw ContractError("backward: loss must be a scalar tensor");
  }
  using Node = typename Tensor<T>::Node;
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS gives a topological order; each node once.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{loss.node(), 0}};
  seen.insert(loss.node());
  while (!stack.empty()) {
    auto& [n, idx] = stack.back();
    if (idx < n->parents.size()) {
      Node* p = n->parents[idx++].get();
      if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  loss.node()->grad_buffer()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
  // Interior gradients are not needed after the sweep.
  for (Node* n : order) {
    if (n->backward) {
      n->grad.clear();
      n->grad.shrink_to_fit();
    }
  }
}

// Gradient map: one entry per requested tensor, zero-filled for tensors the
// loss does not reach. Existing gradients on `wrt` are cleared first.
template <typename T>
std::vector<std::vector<T>> gradients(const Tensor<T>& loss, std::vector<Tensor<T>> wrt) {
  for (auto& w : wrt) w.zero_grad();
  backward(loss);
  std::vector<std::vector<T>> out;
  out.reserve(wrt.size());
  for (const auto& w : wrt) out.push_back(w.grad());
  return out;
}

}  // namespace ntd
