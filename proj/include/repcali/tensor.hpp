#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "repcali/errors.hpp"

namespace repcali {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

template <class T>
class Tape;

namespace detail {

template <class T>
struct TensorImpl {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty means "no gradient buffer"
  bool requires_grad = false;
  bool tracked = false;  // output of a node recorded on a tape
  std::optional<std::size_t> node_id;
  const Tape<T>* tape = nullptr;

  bool needs_grad() const { return requires_grad || tracked; }
  void ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), T(0));
  }
};

template <class T>
using ImplPtr = std::shared_ptr<TensorImpl<T>>;

}  // namespace detail

/// Dense row-major tensor with shared ownership of its storage.
///
/// Copies alias the same storage (like a handle); use clone() for a deep copy.
/// Extents must be positive.
template <class T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;

  explicit BasicTensor(Shape shape, T fill = T(0)) : impl_(std::make_shared<detail::TensorImpl<T>>()) {
    validate(shape);
    impl_->data.assign(shape_numel(shape), fill);
    impl_->shape = std::move(shape);
  }

  BasicTensor(Shape shape, std::vector<T> data) : impl_(std::make_shared<detail::TensorImpl<T>>()) {
    validate(shape);
    if (shape_numel(shape) != data.size()) {
      throw ShapeError("tensor data length " + std::to_string(data.size()) + " does not match shape " +
                       shape_str(shape));
    }
    impl_->shape = std::move(shape);
    impl_->data = std::move(data);
  }

  static BasicTensor scalar(T v) { return BasicTensor(Shape{1}, std::vector<T>{v}); }

  bool defined() const { return static_cast<bool>(impl_); }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t i) const { return impl_->shape.at(i); }
  std::size_t numel() const { return impl_->data.size(); }

  std::span<const T> data() const { return impl_->data; }
  // Parameters are updated in place by optimizers and checkpoint loading.
  std::span<T> mutable_data() { return impl_->data; }
  const std::vector<T>& vec() const { return impl_->data; }

  T item() const {
    if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
    return impl_->data[0];
  }
  T operator[](std::size_t i) const { return impl_->data[i]; }

  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const T> grad() const { return impl_->grad; }
  std::span<T> mutable_grad() {
    impl_->ensure_grad();
    return impl_->grad;
  }
  void zero_grad() { impl_->grad.clear(); }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool on) { impl_->requires_grad = on; }
  bool tracked() const { return impl_->tracked; }
  std::optional<std::size_t> node_id() const { return impl_->node_id; }

  BasicTensor clone() const { return BasicTensor(impl_->shape, impl_->data); }

  // Plain value copy into another scalar type (no tape history).
  template <class U>
  BasicTensor<U> cast() const {
    std::vector<U> out(impl_->data.begin(), impl_->data.end());
    return BasicTensor<U>(impl_->shape, std::move(out));
  }

  const detail::ImplPtr<T>& impl() const { return impl_; }
  static BasicTensor from_impl(detail::ImplPtr<T> impl) {
    BasicTensor t;
    t.impl_ = std::move(impl);
    return t;
  }

  bool same_storage(const BasicTensor& other) const { return impl_ == other.impl_; }

 private:
  static void validate(const Shape& shape) {
    if (shape.empty()) throw ShapeError("tensor rank must be at least 1");
    for (auto e : shape) {
      if (e == 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
    }
  }

  detail::ImplPtr<T> impl_;
};

using Tensor = BasicTensor<float>;

/// Integer token ids with a shape; never differentiable.
struct IntTensor {
  Shape shape;
  std::vector<int> data;

  IntTensor() = default;
  IntTensor(Shape s, std::vector<int> d) : shape(std::move(s)), data(std::move(d)) {
    if (shape_numel(shape) != data.size()) throw ShapeError("int tensor data does not match shape " + shape_str(shape));
  }
  IntTensor(Shape s, int fill) : shape(std::move(s)), data(shape_numel(shape), fill) {}

  static IntTensor from_rows(const std::vector<std::vector<int>>& rows) {
    if (rows.empty()) throw ShapeError("from_rows: no rows");
    const auto width = rows.front().size();
    std::vector<int> d;
    d.reserve(rows.size() * width);
    for (const auto& r : rows) {
      if (r.size() != width) throw ShapeError("from_rows: ragged rows");
      d.insert(d.end(), r.begin(), r.end());
    }
    return IntTensor({rows.size(), width}, std::move(d));
  }

  std::size_t numel() const { return data.size(); }
  int at(std::size_t r, std::size_t c) const { return data[r * shape.at(1) + c]; }
  std::vector<int> row(std::size_t r) const {
    const auto w = shape.at(1);
    return {data.begin() + static_cast<std::ptrdiff_t>(r * w), data.begin() + static_cast<std::ptrdiff_t>((r + 1) * w)};
  }
  bool operator==(const IntTensor&) const = default;
};

/// Ordered record of primitive applications for reverse-mode differentiation.
template <class T>
class Tape {
 public:
  struct Node {
    std::string op;
    std::vector<detail::ImplPtr<T>> inputs;
    detail::ImplPtr<T> output;
    std::function<void()> backward;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  std::size_t record(std::string op, std::vector<detail::ImplPtr<T>> inputs, detail::ImplPtr<T> output,
                     std::function<void()> backward_fn) {
    const std::size_t id = nodes_.size();
    output->tracked = true;
    output->node_id = id;
    output->tape = this;
    nodes_.push_back(Node{std::move(op), std::move(inputs), std::move(output), std::move(backward_fn)});
    return id;
  }

  std::size_t size() const { return nodes_.size(); }
  const Node& node(std::size_t i) const { return nodes_.at(i); }

  void clear() {
    for (auto& n : nodes_) {
      n.output->node_id.reset();
      n.output->tape = nullptr;
    }
    nodes_.clear();
  }

  ~Tape() { clear(); }

 private:
  template <class U>
  friend void backward(Tape<U>& tape, const BasicTensor<U>& root);

  std::vector<Node> nodes_;
};

template <class T>
inline thread_local Tape<T>* active_tape = nullptr;

/// Makes `tape` the recording tape for the current thread while in scope.
template <class T>
class TapeGuard {
 public:
  explicit TapeGuard(Tape<T>& tape) : prev_(active_tape<T>) { active_tape<T> = &tape; }
  TapeGuard(const TapeGuard&) = delete;
  TapeGuard& operator=(const TapeGuard&) = delete;
  ~TapeGuard() { active_tape<T> = prev_; }

 private:
  Tape<T>* prev_;
};

/// Suspends recording on the current thread (evaluation code paths).
template <class T>
class NoGradGuard {
 public:
  NoGradGuard() : prev_(active_tape<T>) { active_tape<T> = nullptr; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
  ~NoGradGuard() { active_tape<T> = prev_; }

 private:
  Tape<T>* prev_;
};

/// Accumulates d(root)/d(leaf) into every requires-grad leaf reachable from root.
/// Intermediate gradients are reset on each call, so repeated calls accumulate
/// only into leaves.
template <class T>
void backward(Tape<T>& tape, const BasicTensor<T>& root) {
  if (root.numel() != 1) throw ShapeError("backward root must be scalar, got shape " + shape_str(root.shape()));
  const auto& impl = root.impl();
  if (!impl->node_id || impl->tape != &tape) throw StateError("backward root is not recorded on this tape");
  const std::size_t root_id = *impl->node_id;
  for (std::size_t i = 0; i <= root_id; ++i) {
    auto& out = *tape.nodes_[i].output;
    out.grad.assign(out.data.size(), T(0));
  }
  impl->grad[0] = T(1);
  for (std::size_t i = root_id + 1; i-- > 0;) tape.nodes_[i].backward();
}

}  // namespace repcali
