#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "cis/error.hpp"

namespace cis {

// Extents, outermost first. Network tensors are NCHW; reductions produce
// rank-1 shapes. Rank 0 is not used.
using Shape = std::vector<int>;

inline std::int64_t numel(const Shape& s) {
  std::int64_t n = 1;
  for (int e : s) n *= e;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ']';
  return os.str();
}

inline bool same_shape(const Shape& a, const Shape& b) { return a == b; }

template <typename T>
inline void check_finite(std::span<const T> v, const char* op) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(static_cast<double>(v[i]))) {
      fail(std::string(op) + ": non-finite value at flat index " + std::to_string(i));
    }
  }
}

// Dense tensor with reverse-mode differentiation. A Tensor is a shared handle
// to a graph node; ops build new nodes that hold their parents alive. Leaves
// (parameters, inputs) have no backward function. Gradients accumulate into
// `grad` in a fixed topological order, so repeated passes are bit-identical.
template <typename T>
class Tensor {
 public:
  struct Node {
    Shape shape;
    std::vector<T> values;
    std::vector<T> grad;  // empty until first accumulation
    bool requires_grad = false;
    std::vector<Tensor> parents;
    std::function<void(Node&)> backward;

    std::vector<T>& ensure_grad() {
      if (grad.empty()) grad.assign(values.size(), T(0));
      return grad;
    }
  };

  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return filled(std::move(shape), T(0), requires_grad);
  }

  static Tensor filled(Shape shape, T value, bool requires_grad = false) {
    Tensor t;
    t.node_ = std::make_shared<Node>();
    t.node_->shape = std::move(shape);
    t.node_->values.assign(static_cast<std::size_t>(numel(t.node_->shape)), value);
    t.node_->requires_grad = requires_grad;
    return t;
  }

  static Tensor from_data(Shape shape, std::vector<T> values, bool requires_grad = false) {
    if (static_cast<std::int64_t>(values.size()) != numel(shape)) {
      fail("tensor: value count " + std::to_string(values.size()) +
           " does not match shape " + shape_str(shape));
    }
    check_finite<T>(values, "tensor");
    Tensor t;
    t.node_ = std::make_shared<Node>();
    t.node_->shape = std::move(shape);
    t.node_->values = std::move(values);
    t.node_->requires_grad = requires_grad;
    return t;
  }

  static Tensor scalar(T value, bool requires_grad = false) {
    return from_data({1}, {value}, requires_grad);
  }

  // op-construction helper: result node with parents and backward attached
  // only when some parent needs gradients
  static Tensor result(Shape shape, std::vector<T> values, std::vector<Tensor> parents,
                       std::function<void(Node&)> backward) {
    Tensor t;
    t.node_ = std::make_shared<Node>();
    t.node_->shape = std::move(shape);
    t.node_->values = std::move(values);
    bool needs = false;
    for (const auto& p : parents) needs = needs || p.requires_grad();
    t.node_->requires_grad = needs;
    if (needs) {
      t.node_->parents = std::move(parents);
      t.node_->backward = std::move(backward);
    }
    return t;
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::int64_t size() const { return static_cast<std::int64_t>(node_->values.size()); }
  int dim(int i) const { return node_->shape[static_cast<std::size_t>(i)]; }
  int rank() const { return static_cast<int>(node_->shape.size()); }

  std::span<const T> values() const { return node_->values; }
  std::span<T> mutable_values() { return node_->values; }
  std::span<const T> grad() const { return node_->grad; }
  bool has_grad() const { return !node_->grad.empty(); }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool v) { node_->requires_grad = v; }

  void zero_grad() { node_->grad.clear(); }

  T item() const {
    if (size() != 1) fail("tensor: item() on non-scalar " + shape_str(shape()));
    return node_->values[0];
  }

  Node* node() const { return node_.get(); }

  // Reverse-mode sweep from a scalar loss. Topological order is fixed by the
  // graph structure (DFS over parents in construction order), which pins the
  // accumulation order and makes gradients reproducible bit-for-bit.
  void backward() const {
    if (size() != 1) fail("backward: loss must be scalar, got " + shape_str(shape()));
    if (!node_->requires_grad) fail("backward: loss does not require gradients");

    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    seen.insert(node_.get());
    while (!stack.empty()) {
      auto& [n, next] = stack.back();
      if (next < n->parents.size()) {
        Node* p = n->parents[next].node();
        ++next;
        if (p->requires_grad && !seen.count(p)) {
          seen.insert(p);
          stack.emplace_back(p, 0);
        }
      } else {
        order.push_back(n);
        stack.pop_back();
      }
    }

    auto& g = node_->ensure_grad();
    g[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      if ((*it)->backward) (*it)->backward(**it);
    }
  }

 private:
  std::shared_ptr<Node> node_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace cis
