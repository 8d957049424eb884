#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "clippo/tensor.hpp"

namespace clippo::nn {

template <typename T>
class Tape;

// Handle to a node on a tape.
template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  std::uint32_t id = 0;

  const Tensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }
};

// Records primitive ops in execution order, which is a topological order, so
// backward() is a single reverse sweep visiting every node once. Single
// threaded; independent tapes may live on separate threads.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> leaf(Tensor<T> value, bool trainable = false);
  Var<T> constant(Tensor<T> value) { return leaf(std::move(value), false); }

  // Used by op implementations.
  Var<T> record(Tensor<T> value, std::vector<std::uint32_t> inputs, BackwardFn backward);

  const Tensor<T>& value(Var<T> v) const { return nodes_[v.id].value; }
  const Tensor<T>& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(Var<T> v) const { return nodes_[v.id].requires_grad; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  const std::vector<std::uint32_t>& inputs(std::size_t id) const { return nodes_[id].inputs; }

  // Gradient of the last backward(); zeros when the node received none.
  Tensor<T> grad(Var<T> v) const;

  // Accumulation target for op backward functions. Allocates zeros lazily.
  Tensor<T>& grad_ref(std::size_t id);
  const Tensor<T>& upstream(std::size_t id) const { return nodes_[id].grad; }

  // Reverse sweep from a one-element loss. Throws ContractError otherwise.
  void backward(Var<T> loss);

  void zero_grad();

  // When enabled every recorded value is checked for NaN/Inf and a
  // ContractError names the offending node. Off by default.
  void set_check_finite(bool on) { check_finite_ = on; }

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    std::vector<std::uint32_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
  };
  std::vector<Node> nodes_;
  bool check_finite_ = false;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
  return tape->value(*this);
}

// Elementwise ops accept equal shapes, or a second operand whose shape is a
// suffix of the first (broadcast over leading dimensions), in either order.
template <typename T> Var<T> add(Var<T> a, Var<T> b);
template <typename T> Var<T> sub(Var<T> a, Var<T> b);
template <typename T> Var<T> mul(Var<T> a, Var<T> b);
template <typename T> Var<T> div(Var<T> a, Var<T> b);
template <typename T> Var<T> scale(Var<T> a, T factor);
template <typename T> Var<T> neg(Var<T> a);
template <typename T> Var<T> exp(Var<T> a);
template <typename T> Var<T> log(Var<T> a);
// tanh approximation.
template <typename T> Var<T> gelu(Var<T> a);
template <typename T> Var<T> relu(Var<T> a);

// [..., M, K] x [K, N], or batched [..., M, K] x [..., K, N] with equal
// leading dimensions.
template <typename T> Var<T> matmul(Var<T> a, Var<T> b);
// Swaps the last two dimensions.
template <typename T> Var<T> transpose(Var<T> a);
template <typename T> Var<T> permute(Var<T> a, const std::vector<std::size_t>& axes);
template <typename T> Var<T> reshape(Var<T> a, Shape shape);
template <typename T> Var<T> slice(Var<T> a, std::size_t axis, std::size_t begin, std::size_t end);
template <typename T> Var<T> concat(const std::vector<Var<T>>& parts, std::size_t axis);
// [n, ...shape(a)] holding n copies of a.
template <typename T> Var<T> tile_leading(Var<T> a, std::size_t n);
// Rows of a (first axis) selected by index; repeats allowed.
template <typename T> Var<T> gather_rows(Var<T> a, std::span<const std::size_t> rows);

template <typename T> Var<T> sum(Var<T> a);
template <typename T> Var<T> mean(Var<T> a);

template <typename T> Var<T> softmax_lastdim(Var<T> a);
// Normalizes the last dimension to zero mean, unit variance (no affine).
template <typename T> Var<T> layernorm_lastdim(Var<T> a, T eps = T(1e-6));
template <typename T> Var<T> l2_normalize_lastdim(Var<T> a);
// Mean over rows of -log softmax(logits)[target]. logits: [N, C].
template <typename T> Var<T> cross_entropy_rows(Var<T> logits, std::span<const std::size_t> targets);

template <typename T> Var<T> operator+(Var<T> a, Var<T> b) { return add(a, b); }
template <typename T> Var<T> operator-(Var<T> a, Var<T> b) { return sub(a, b); }
template <typename T> Var<T> operator*(Var<T> a, Var<T> b) { return mul(a, b); }
template <typename T> Var<T> operator/(Var<T> a, Var<T> b) { return div(a, b); }

}  // namespace clippo::nn
