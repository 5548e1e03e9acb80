#include "starvqa/autodiff.hpp"

#include <cmath>
#include <cstddef>
#include <vector>

#include "starvqa/kernels.hpp"

namespace starvqa::ad {

template <typename T>
Var<T> Tape<T>::parameter(const Tensor<T>& value, std::string name) {
  auto node = std::make_shared<Node<T>>();
  node->borrowed = &value;
  node->requires_grad = recording_;
  node->name = std::move(name);
  if (recording_) leaves_.push_back(node);
  return Var<T>(node);
}

template <typename T>
Var<T> Tape<T>::constant(Tensor<T> value, std::string name) {
  auto node = std::make_shared<Node<T>>();
  node->owned = std::move(value);
  node->name = std::move(name);
  if (recording_) leaves_.push_back(node);
  return Var<T>(node);
}

template <typename T>
Var<T> Tape<T>::record(std::string op, Tensor<T> value, std::initializer_list<Var<T>> inputs, Backward backward) {
  auto node = std::make_shared<Node<T>>();
  node->owned = std::move(value);
  node->name = std::move(op);
  if (recording_) {
    for (const auto& in : inputs) node->requires_grad = node->requires_grad || in.requires_grad();
    if (node->requires_grad) node->backward = std::move(backward);
    ops_.push_back(node);
  }
  return Var<T>(node);
}

template <typename T>
void Tape<T>::backward(const Var<T>& loss) {
  if (loss.value().size() != 1)
    throw ContractError("backward needs a scalar loss, got shape " + to_string(loss.value().shape()));
  if (!recording_) throw StateError("backward on a tape that was not recording");
  if (!loss.requires_grad()) return;
  loss.node().grad_buffer()[0] += T{1};
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
    Node<T>& node = **it;
    if (!node.backward || node.grad.size() == 0) continue;  // unreached
    node.backward(node.grad);
  }
}

template <typename T>
std::optional<std::string> Tape<T>::first_non_finite() const {
  auto bad = [](const Node<T>& n) {
    for (T x : n.value().values())
      if (!std::isfinite(x)) return true;
    return false;
  };
  for (const auto& n : leaves_)
    if (bad(*n)) return n->name.empty() ? std::string("<leaf>") : n->name;
  for (std::size_t i = 0; i < ops_.size(); ++i)
    if (bad(*ops_[i])) return ops_[i]->name + " (op #" + std::to_string(i) + ")";
  return std::nullopt;
}

namespace {

[[noreturn]] void shape_mismatch(const char* op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + to_string(a) + " and " + to_string(b));
}

template <typename T>
void accumulate(Var<T> target, std::span<const T> delta) {
  if (!target.requires_grad()) return;
  auto g = target.node().grad_buffer().values();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += delta[i];
}

}  // namespace

template <typename T>
Var<T> matmul(Tape<T>& tape, const Var<T>& a, const Var<T>& b) {
  const auto& A = a.value();
  const auto& B = b.value();
  if (A.cols() != B.rows()) shape_mismatch("matmul", A.shape(), B.shape());
  const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
  Tensor<T> out({m, n});
  kernels::matmul<T>(A.values(), B.values(), out.values(), m, k, n);
  return tape.record("matmul", std::move(out), {a, b}, [a, b, m, k, n](const Tensor<T>& g) {
    if (a.requires_grad())
      kernels::matmul_nt<T>(g.values(), b.value().values(), a.node().grad_buffer().values(), m, n, k, true);
    if (b.requires_grad())
      kernels::matmul_tn<T>(a.value().values(), g.values(), b.node().grad_buffer().values(), k, m, n, true);
  });
}

template <typename T>
Var<T> linear(Tape<T>& tape, const Var<T>& x, const Var<T>& w) {
  const auto& X = x.value();
  const auto& W = w.value();
  if (X.cols() != W.cols()) shape_mismatch("linear", X.shape(), W.shape());
  const std::size_t n = X.rows(), in = X.cols(), out_dim = W.rows();
  Tensor<T> out({n, out_dim});
  kernels::matmul_nt<T>(X.values(), W.values(), out.values(), n, in, out_dim);
  return tape.record("linear", std::move(out), {x, w}, [x, w, n, in, out_dim](const Tensor<T>& g) {
    if (x.requires_grad())
      kernels::matmul<T>(g.values(), w.value().values(), x.node().grad_buffer().values(), n, out_dim, in, true);
    if (w.requires_grad())
      kernels::matmul_tn<T>(g.values(), x.value().values(), w.node().grad_buffer().values(), out_dim, n, in, true);
  });
}

template <typename T>
Var<T> add(Tape<T>& tape, const Var<T>& a, const Var<T>& b) {
  const auto& A = a.value();
  const auto& B = b.value();
  if (A.size() != B.size()) shape_mismatch("add", A.shape(), B.shape());
  Tensor<T> out = A;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += B[i];
  return tape.record("add", std::move(out), {a, b}, [a, b](const Tensor<T>& g) {
    accumulate(a, g.values());
    accumulate(b, g.values());
  });
}

template <typename T>
Var<T> add_bias(Tape<T>& tape, const Var<T>& x, const Var<T>& bias) {
  const auto& X = x.value();
  const auto& B = bias.value();
  if (B.size() != X.cols()) shape_mismatch("add_bias", X.shape(), B.shape());
  Tensor<T> out = X;
  const std::size_t cols = X.cols();
  for (std::size_t r = 0; r < X.rows(); ++r)
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] += B[c];
  return tape.record("add_bias", std::move(out), {x, bias}, [x, bias, cols](const Tensor<T>& g) {
    accumulate(x, g.values());
    if (bias.requires_grad()) {
      auto gb = bias.node().grad_buffer().values();
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < cols; ++c) gb[c] += g[r * cols + c];
    }
  });
}

template <typename T>
Var<T> prepend_row(Tape<T>& tape, const Var<T>& row, const Var<T>& x) {
  const auto& R = row.value();
  const auto& X = x.value();
  if (R.size() != X.cols()) shape_mismatch("prepend_row", R.shape(), X.shape());
  const std::size_t cols = X.cols();
  std::vector<T> data;
  data.reserve(R.size() + X.size());
  data.insert(data.end(), R.values().begin(), R.values().end());
  data.insert(data.end(), X.values().begin(), X.values().end());
  Tensor<T> out({X.rows() + 1, cols}, std::move(data));
  return tape.record("prepend_row", std::move(out), {row, x}, [row, x, cols](const Tensor<T>& g) {
    accumulate(row, g.values().subspan(0, cols));
    accumulate(x, g.values().subspan(cols));
  });
}

template <typename T>
Var<T> take_row(Tape<T>& tape, const Var<T>& x, std::size_t r) {
  const auto& X = x.value();
  if (r >= X.rows()) throw ShapeError("take_row: row " + std::to_string(r) + " of " + to_string(X.shape()));
  const std::size_t cols = X.cols();
  auto src = X.row(r);
  Tensor<T> out({1, cols}, std::vector<T>(src.begin(), src.end()));
  return tape.record("take_row", std::move(out), {x}, [x, r, cols](const Tensor<T>& g) {
    if (!x.requires_grad()) return;
    auto gx = x.node().grad_buffer().values();
    for (std::size_t c = 0; c < cols; ++c) gx[r * cols + c] += g[c];
  });
}

template <typename T>
Var<T> layer_norm(Tape<T>& tape, const Var<T>& x, const Var<T>& gain, const Var<T>& bias, T eps) {
  const auto& X = x.value();
  const std::size_t rows = X.rows(), n = X.cols();
  if (gain.value().size() != n || bias.value().size() != n)
    shape_mismatch("layer_norm", X.shape(), gain.value().shape());
  Tensor<T> out(X.shape());
  auto rstd = std::make_shared<std::vector<T>>(rows);
  const auto zero = std::vector<T>(n, T{0});
  const auto one = std::vector<T>(n, T{1});
  // Normalized input without the affine part, kept for the backward pass.
  auto xhat = std::make_shared<std::vector<T>>(X.size());
  kernels::layernorm_rows<T>(X.values(), one, zero, *xhat, *rstd, rows, n, eps);
  const auto& G = gain.value();
  const auto& B = bias.value();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] = (*xhat)[r * n + c] * G[c] + B[c];

  return tape.record("layer_norm", std::move(out), {x, gain, bias},
                     [x, gain, bias, rstd, xhat, rows, n](const Tensor<T>& g) {
                       const auto& G = gain.value();
                       if (gain.requires_grad() || bias.requires_grad()) {
                         auto gg = gain.node().grad_buffer().values();
                         auto gb = bias.node().grad_buffer().values();
                         for (std::size_t r = 0; r < rows; ++r)
                           for (std::size_t c = 0; c < n; ++c) {
                             gg[c] += g[r * n + c] * (*xhat)[r * n + c];
                             gb[c] += g[r * n + c];
                           }
                       }
                       if (!x.requires_grad()) return;
                       auto gx = x.node().grad_buffer().values();
                       const T inv_n = T{1} / static_cast<T>(n);
#pragma omp parallel for schedule(static)
                       for (std::ptrdiff_t ri = 0; ri < static_cast<std::ptrdiff_t>(rows); ++ri) {
                         const std::size_t r = static_cast<std::size_t>(ri);
                         T mean_d = 0, mean_dx = 0;
                         for (std::size_t c = 0; c < n; ++c) {
                           const T d = g[r * n + c] * G[c];
                           mean_d += d;
                           mean_dx += d * (*xhat)[r * n + c];
                         }
                         mean_d *= inv_n;
                         mean_dx *= inv_n;
                         for (std::size_t c = 0; c < n; ++c) {
                           const T d = g[r * n + c] * G[c];
                           gx[r * n + c] += (*rstd)[r] * (d - mean_d - (*xhat)[r * n + c] * mean_dx);
                         }
                       }
                     });
}

template <typename T>
Var<T> gelu(Tape<T>& tape, const Var<T>& x) {
  Tensor<T> out(x.value().shape());
  kernels::gelu<T>(x.value().values(), out.values());
  return tape.record("gelu", std::move(out), {x}, [x](const Tensor<T>& g) {
    if (!x.requires_grad()) return;
    auto gx = x.node().grad_buffer().values();
    const auto& X = x.value();
    for (std::size_t i = 0; i < X.size(); ++i) gx[i] += g[i] * kernels::gelu_derivative(X[i]);
  });
}

template <typename T>
Var<T> softmax_rows(Tape<T>& tape, const Var<T>& x) {
  const auto& X = x.value();
  Tensor<T> out(X.shape());
  kernels::softmax_rows<T>(X.values(), out.values(), X.rows(), X.cols());
  auto y = std::make_shared<Tensor<T>>(out);
  return tape.record("softmax", std::move(out), {x}, [x, y](const Tensor<T>& g) {
    if (!x.requires_grad()) return;
    auto gx = x.node().grad_buffer().values();
    const std::size_t n = y->cols();
    for (std::size_t r = 0; r < y->rows(); ++r) {
      T dot = 0;
      for (std::size_t c = 0; c < n; ++c) dot += g[r * n + c] * (*y)[r * n + c];
      for (std::size_t c = 0; c < n; ++c) gx[r * n + c] += (*y)[r * n + c] * (g[r * n + c] - dot);
    }
  });
}

template <typename T>
Var<T> divided_attention(Tape<T>& tape, const Var<T>& q, const Var<T>& k, const Var<T>& v, AttentionPass pass,
                         const TokenLayout& layout, std::size_t heads, AttentionWeights<T>* probe) {
  const auto& Q = q.value();
  if (Q.rows() != layout.tokens())
    throw ShapeError("divided_attention: " + std::to_string(Q.rows()) + " rows for a layout of " +
                     std::to_string(layout.tokens()) + " tokens");
  Tensor<T> out(Q.shape());
  auto weights = std::make_shared<AttentionWeights<T>>();
  divided_attention_forward<T>(pass, layout, heads, Q.values(), k.value().values(), v.value().values(),
                               out.values(), *weights);
  if (probe) *probe = *weights;
  return tape.record("attention", std::move(out), {q, k, v}, [q, k, v, pass, layout, heads, weights](const Tensor<T>& g) {
    // Inputs that do not require gradients get a throwaway buffer.
    std::vector<T> dq_sink, dk_sink, dv_sink;
    auto target = [](const Var<T>& var, std::vector<T>& sink) -> std::span<T> {
      if (var.requires_grad()) return var.node().grad_buffer().values();
      sink.assign(var.value().size(), T{0});
      return sink;
    };
    auto dq = target(q, dq_sink);
    auto dk = target(k, dk_sink);
    auto dv = target(v, dv_sink);
    divided_attention_backward<T>(pass, layout, heads, q.value().values(), k.value().values(), v.value().values(),
                                  *weights, g.values(), dq, dk, dv);
  });
}

template <typename T>
Var<T> cosine_distance(Tape<T>& tape, const Var<T>& y, const Tensor<T>& target) {
  const auto& Y = y.value();
  if (Y.size() != target.size()) shape_mismatch("cosine_distance", Y.shape(), target.shape());
  T dot = 0, yy = 0, qq = 0;
  for (std::size_t i = 0; i < Y.size(); ++i) {
    dot += Y[i] * target[i];
    yy += Y[i] * Y[i];
    qq += target[i] * target[i];
  }
  if (yy == T{0} || qq == T{0}) throw ContractError("cosine_distance of a zero-norm vector");
  const T ny = std::sqrt(yy), nq = std::sqrt(qq);
  Tensor<T> out({1}, {T{1} - dot / (ny * nq)});
  return tape.record("cosine_distance", std::move(out), {y}, [y, target, dot, ny, nq](const Tensor<T>& g) {
    if (!y.requires_grad()) return;
    auto gy = y.node().grad_buffer().values();
    const auto& Y = y.value();
    const T denom = ny * nq;
    for (std::size_t i = 0; i < Y.size(); ++i)
      gy[i] += g[0] * -(target[i] / denom - dot * Y[i] / (denom * ny * ny));
  });
}

#define SVQA_INSTANTIATE_AD(T)                                                                              \
  template class Tape<T>;                                                                                    \
  template Var<T> matmul<T>(Tape<T>&, const Var<T>&, const Var<T>&);                                         \
  template Var<T> linear<T>(Tape<T>&, const Var<T>&, const Var<T>&);                                         \
  template Var<T> add<T>(Tape<T>&, const Var<T>&, const Var<T>&);                                            \
  template Var<T> add_bias<T>(Tape<T>&, const Var<T>&, const Var<T>&);                                       \
  template Var<T> prepend_row<T>(Tape<T>&, const Var<T>&, const Var<T>&);                                    \
  template Var<T> take_row<T>(Tape<T>&, const Var<T>&, std::size_t);                                         \
  template Var<T> layer_norm<T>(Tape<T>&, const Var<T>&, const Var<T>&, const Var<T>&, T);                   \
  template Var<T> gelu<T>(Tape<T>&, const Var<T>&);                                                          \
  template Var<T> softmax_rows<T>(Tape<T>&, const Var<T>&);                                                  \
  template Var<T> divided_attention<T>(Tape<T>&, const Var<T>&, const Var<T>&, const Var<T>&, AttentionPass, \
                                       const TokenLayout&, std::size_t, AttentionWeights<T>*);               \
  template Var<T> cosine_distance<T>(Tape<T>&, const Var<T>&, const Tensor<T>&);

SVQA_INSTANTIATE_AD(float)
SVQA_INSTANTIATE_AD(double)

}  // namespace starvqa::ad
