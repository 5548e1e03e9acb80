#pragma once

#include <functional>
#include <initializer_list>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "starvqa/attention.hpp"
#include "starvqa/tensor.hpp"

namespace starvqa::ad {

template <typename T>
struct Node {
  Tensor<T> owned;
  const Tensor<T>* borrowed = nullptr;  // parameters live in their store
  Tensor<T> grad;
  bool requires_grad = false;
  std::string name;
  std::function<void(const Tensor<T>&)> backward;

  const Tensor<T>& value() const { return borrowed ? *borrowed : owned; }
  Tensor<T>& grad_buffer() {
    if (grad.size() != value().size()) grad = Tensor<T>(value().shape());
    return grad;
  }
};

/// Handle to a value on a tape.
template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  bool valid() const { return node_ != nullptr; }
  const Tensor<T>& value() const { return node_->value(); }
  /// Accumulated gradient; zeros if backward never reached this value.
  const Tensor<T>& grad() const { return node_->grad_buffer(); }
  bool requires_grad() const { return node_->requires_grad; }
  Node<T>& node() const { return *node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

/// Define-by-run record of differentiable operations. Operations are stored
/// in creation order, which is a topological order of the graph, and
/// backward() replays them in exact reverse. A tape built with
/// record_gradients = false keeps nothing, so intermediate values are freed
/// as soon as their handles go away (inference mode).
///
/// Single-threaded; use one tape per concurrent forward/backward pass.
template <typename T>
class Tape {
 public:
  using Backward = std::function<void(const Tensor<T>&)>;

  explicit Tape(bool record_gradients = true) : recording_(record_gradients) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return recording_; }

  /// Leaf that refers to `value` without copying; `value` must outlive the tape.
  Var<T> parameter(const Tensor<T>& value, std::string name = {});
  Var<T> constant(Tensor<T> value, std::string name = {});

  /// Creates the output of an operation. `backward` receives the output
  /// gradient and accumulates into the inputs; it is kept only when some
  /// input requires a gradient.
  Var<T> record(std::string op, Tensor<T> value, std::initializer_list<Var<T>> inputs, Backward backward);

  /// Reverse sweep from a scalar loss.
  void backward(const Var<T>& loss);

  std::size_t size() const { return ops_.size(); }

  /// Name of the first recorded value (leaves included) holding NaN or Inf.
  std::optional<std::string> first_non_finite() const;

 private:
  bool recording_;
  std::vector<std::shared_ptr<Node<T>>> leaves_;
  std::vector<std::shared_ptr<Node<T>>> ops_;
};

// Differentiable operations. Matrices follow Tensor::rows()/cols().

/// a (m×k) · b (k×n).
template <typename T>
Var<T> matmul(Tape<T>& tape, const Var<T>& a, const Var<T>& b);

/// x (N×in) · wᵀ, with w viewed as out×in (its last dimension is `in`).
template <typename T>
Var<T> linear(Tape<T>& tape, const Var<T>& x, const Var<T>& w);

template <typename T>
Var<T> add(Tape<T>& tape, const Var<T>& a, const Var<T>& b);

/// Adds a cols()-wide bias to every row.
template <typename T>
Var<T> add_bias(Tape<T>& tape, const Var<T>& x, const Var<T>& bias);

/// Stacks a single row on top of a matrix.
template <typename T>
Var<T> prepend_row(Tape<T>& tape, const Var<T>& row, const Var<T>& x);

template <typename T>
Var<T> take_row(Tape<T>& tape, const Var<T>& x, std::size_t row);

template <typename T>
Var<T> layer_norm(Tape<T>& tape, const Var<T>& x, const Var<T>& gain, const Var<T>& bias, T eps);

template <typename T>
Var<T> gelu(Tape<T>& tape, const Var<T>& x);

template <typename T>
Var<T> softmax_rows(Tape<T>& tape, const Var<T>& x);

/// Multi-head divided attention aggregation (before the output projection).
/// If `probe` is given, the forward softmax weights are copied into it.
template <typename T>
Var<T> divided_attention(Tape<T>& tape, const Var<T>& q, const Var<T>& k, const Var<T>& v, AttentionPass pass,
                         const TokenLayout& layout, std::size_t heads, AttentionWeights<T>* probe = nullptr);

/// 1 − ⟨target, y⟩ / (‖target‖·‖y‖) as a 1-element tensor.
template <typename T>
Var<T> cosine_distance(Tape<T>& tape, const Var<T>& y, const Tensor<T>& target);

}  // namespace starvqa::ad
