#pragma once

#include <cstddef>
#include <span>

namespace starvqa::kernels {

// Dense kernels on row-major buffers. Every output element is produced by a
// single thread with a fixed accumulation order, so results do not depend on
// the thread count. The `reference` namespace holds the plain serial
// versions used by the tests and the benchmark.
//
// Instantiated for float and double.

/// C = A·B (or C += A·B), A is m×k, B is k×n.
template <typename T>
void matmul(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m, std::size_t k,
            std::size_t n, bool accumulate = false);

/// C = A·Bᵀ (or +=), A is m×k, B is n×k.
template <typename T>
void matmul_nt(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate = false);

/// C = Aᵀ·B (or +=), A is k×m, B is k×n.
template <typename T>
void matmul_tn(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate = false);

template <typename T>
void transpose(std::span<const T> a, std::span<T> out, std::size_t rows, std::size_t cols);

/// Row-wise softmax with max subtraction.
template <typename T>
void softmax_rows(std::span<const T> x, std::span<T> y, std::size_t rows, std::size_t n);

/// Row-wise layer normalization with biased variance. `rstd` receives
/// 1/sqrt(var + eps) per row when non-empty.
template <typename T>
void layernorm_rows(std::span<const T> x, std::span<const T> gain, std::span<const T> bias, std::span<T> y,
                    std::span<T> rstd, std::size_t rows, std::size_t n, T eps);

/// x·Φ(x) with the exact error-function form.
template <typename T>
void gelu(std::span<const T> x, std::span<T> y);

/// dΦ-form derivative of gelu: Φ(x) + x·φ(x).
template <typename T>
T gelu_derivative(T x);

/// Caps the OpenMP worker count; n <= 0 restores the runtime default.
void set_thread_limit(int n);
int thread_limit();

namespace reference {

template <typename T>
void matmul(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m, std::size_t k,
            std::size_t n, bool accumulate = false);

template <typename T>
void matmul_nt(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate = false);

template <typename T>
void matmul_tn(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate = false);

template <typename T>
void softmax_rows(std::span<const T> x, std::span<T> y, std::size_t rows, std::size_t n);

template <typename T>
void layernorm_rows(std::span<const T> x, std::span<const T> gain, std::span<const T> bias, std::span<T> y,
                    std::span<T> rstd, std::size_t rows, std::size_t n, T eps);

}  // namespace reference

}  // namespace starvqa::kernels
