#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "denseseg/core/error.hpp"

namespace dseg {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

// Storage shared by every handle to one tensor. `grad` stays empty until a
// gradient is first accumulated into it.
template <typename T>
struct TensorNode {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;
  bool requires_grad = false;
  bool retain_grad = false;
  // Index of the tape record that produced this node, or -1 for leaves.
  std::ptrdiff_t producer = -1;
  const void* tape = nullptr;

  bool is_leaf() const { return producer < 0; }

  std::span<T> ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), T(0));
    return grad;
  }
};

template <typename T>
using NodePtr = std::shared_ptr<TensorNode<T>>;

/// Handle to a dense row-major float tensor. Copies share storage; use
/// `clone()` for an independent buffer. Activations use [N, C, D, H, W].
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;
  explicit BasicTensor(NodePtr<T> node) : node_(std::move(node)) {}

  static BasicTensor zeros(Shape shape) { return full(std::move(shape), T(0)); }

  static BasicTensor full(Shape shape, T value) {
    validate(shape);
    auto node = std::make_shared<TensorNode<T>>();
    node->data.assign(shape_numel(shape), value);
    node->shape = std::move(shape);
    return BasicTensor(std::move(node));
  }

  static BasicTensor from(Shape shape, std::vector<T> values) {
    validate(shape);
    if (values.size() != shape_numel(shape)) {
      throw ShapeError("tensor: " + std::to_string(values.size()) +
                       " values do not fill shape " + shape_str(shape));
    }
    auto node = std::make_shared<TensorNode<T>>();
    node->shape = std::move(shape);
    node->data = std::move(values);
    return BasicTensor(std::move(node));
  }

  static BasicTensor scalar(T value) { return from({1}, {value}); }

  bool defined() const { return static_cast<bool>(node_); }
  explicit operator bool() const { return defined(); }

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t numel() const { return node_->data.size(); }

  std::span<T> data() { return node_->data; }
  std::span<const T> data() const { return node_->data; }
  T* ptr() { return node_->data.data(); }
  const T* ptr() const { return node_->data.data(); }

  T item() const {
    if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
    return node_->data[0];
  }

  T& operator[](std::size_t i) { return node_->data[i]; }
  const T& operator[](std::size_t i) const { return node_->data[i]; }

  bool requires_grad() const { return node_->requires_grad; }
  BasicTensor& set_requires_grad(bool flag) {
    node_->requires_grad = flag;
    return *this;
  }
  BasicTensor& retain_grad() {
    node_->retain_grad = true;
    return *this;
  }

  bool is_leaf() const { return node_->is_leaf(); }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() { return node_->ensure_grad(); }
  void zero_grad() { node_->grad.clear(); }

  BasicTensor clone() const {
    auto node = std::make_shared<TensorNode<T>>();
    node->shape = node_->shape;
    node->data = node_->data;
    node->requires_grad = node_->requires_grad;
    return BasicTensor(std::move(node));
  }

  // Same values, no gradient history.
  BasicTensor detach() const {
    auto copy = clone();
    copy.set_requires_grad(false);
    return copy;
  }

  const NodePtr<T>& node() const { return node_; }

  bool same_storage(const BasicTensor& other) const { return node_ == other.node_; }

  // Extents of a [N, C, D, H, W] activation.
  std::size_t batch() const { return dim(0); }
  std::size_t channels() const { return dim(1); }
  std::size_t spatial_numel() const {
    std::size_t n = 1;
    for (std::size_t i = 2; i < rank(); ++i) n *= node_->shape[i];
    return n;
  }

 private:
  static void validate(const Shape& shape) {
    if (shape.empty()) throw ShapeError("tensor: empty shape");
    for (auto e : shape) {
      if (e == 0) throw ShapeError("tensor: zero extent in " + shape_str(shape));
    }
  }

  NodePtr<T> node_;
};

using Tensor = BasicTensor<float>;

template <typename T>
bool all_finite(std::span<const T> values) {
  return std::all_of(values.begin(), values.end(), [](T v) { return std::isfinite(v); });
}

inline void require_rank5(const Shape& shape, const char* op) {
  if (shape.size() != 5) {
    throw ShapeError(std::string(op) + ": expected [N,C,D,H,W], got " + shape_str(shape));
  }
}

}  // namespace dseg
