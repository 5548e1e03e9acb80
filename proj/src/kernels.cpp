#include "starvqa/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "starvqa/errors.hpp"

namespace starvqa::kernels {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw ShapeError(std::string("kernel buffer size mismatch in ") + what);
}

using Index = std::ptrdiff_t;

}  // namespace

template <typename T>
void matmul(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m, std::size_t k,
            std::size_t n, bool accumulate) {
  require(a.size() == m * k && b.size() == k * n && c.size() == m * n, "matmul");
  const T* A = a.data();
  const T* B = b.data();
  T* C = c.data();
  const Index groups = static_cast<Index>((m + 3) / 4);

  // Four output rows share each streamed row of B.
#pragma omp parallel for schedule(static)
  for (Index g = 0; g < groups; ++g) {
    const std::size_t i0 = static_cast<std::size_t>(g) * 4;
    const std::size_t rows = std::min<std::size_t>(4, m - i0);
    if (!accumulate) std::fill(C + i0 * n, C + (i0 + rows) * n, T{0});
    if (rows == 4) {
      T* c0 = C + i0 * n;
      T* c1 = c0 + n;
      T* c2 = c1 + n;
      T* c3 = c2 + n;
      const T* a0 = A + i0 * k;
      const T* a1 = a0 + k;
      const T* a2 = a1 + k;
      const T* a3 = a2 + k;
      for (std::size_t p = 0; p < k; ++p) {
        const T* bp = B + p * n;
        const T s0 = a0[p], s1 = a1[p], s2 = a2[p], s3 = a3[p];
#pragma omp simd
        for (std::size_t j = 0; j < n; ++j) {
          const T bv = bp[j];
          c0[j] += s0 * bv;
          c1[j] += s1 * bv;
          c2[j] += s2 * bv;
          c3[j] += s3 * bv;
        }
      }
    } else {
      for (std::size_t r = 0; r < rows; ++r) {
        T* ci = C + (i0 + r) * n;
        const T* ai = A + (i0 + r) * k;
        for (std::size_t p = 0; p < k; ++p) {
          const T* bp = B + p * n;
          const T s = ai[p];
#pragma omp simd
          for (std::size_t j = 0; j < n; ++j) ci[j] += s * bp[j];
        }
      }
    }
  }
}

template <typename T>
void transpose(std::span<const T> a, std::span<T> out, std::size_t rows, std::size_t cols) {
  require(a.size() == rows * cols && out.size() == rows * cols, "transpose");
  constexpr std::size_t kTile = 32;
  const Index row_tiles = static_cast<Index>((rows + kTile - 1) / kTile);
#pragma omp parallel for schedule(static)
  for (Index ti = 0; ti < row_tiles; ++ti) {
    const std::size_t r0 = static_cast<std::size_t>(ti) * kTile;
    const std::size_t r1 = std::min(rows, r0 + kTile);
    for (std::size_t c0 = 0; c0 < cols; c0 += kTile) {
      const std::size_t c1 = std::min(cols, c0 + kTile);
      for (std::size_t r = r0; r < r1; ++r)
        for (std::size_t col = c0; col < c1; ++col) out[col * rows + r] = a[r * cols + col];
    }
  }
}

template <typename T>
void matmul_nt(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate) {
  require(a.size() == m * k && b.size() == n * k && c.size() == m * n, "matmul_nt");
  std::vector<T> bt(k * n);
  transpose<T>(b, bt, n, k);
  matmul<T>(a, bt, c, m, k, n, accumulate);
}

template <typename T>
void matmul_tn(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate) {
  require(a.size() == k * m && b.size() == k * n && c.size() == m * n, "matmul_tn");
  std::vector<T> at(m * k);
  transpose<T>(a, at, k, m);
  matmul<T>(at, b, c, m, k, n, accumulate);
}

namespace {

template <typename T>
void softmax_row(const T* x, T* y, std::size_t n) {
  T mx = x[0];
  for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, x[j]);
  T sum = 0;
  for (std::size_t j = 0; j < n; ++j) {
    y[j] = std::exp(x[j] - mx);
    sum += y[j];
  }
  const T inv = T{1} / sum;
  for (std::size_t j = 0; j < n; ++j) y[j] *= inv;
}

template <typename T>
void layernorm_row(const T* x, const T* gain, const T* bias, T* y, T* rstd, std::size_t n, T eps) {
  double mean = 0;
  for (std::size_t j = 0; j < n; ++j) mean += x[j];
  mean /= static_cast<double>(n);
  double var = 0;
  for (std::size_t j = 0; j < n; ++j) {
    const double d = x[j] - mean;
    var += d * d;
  }
  var /= static_cast<double>(n);
  const T r = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
  const T mu = static_cast<T>(mean);
  for (std::size_t j = 0; j < n; ++j) y[j] = (x[j] - mu) * r * gain[j] + bias[j];
  if (rstd) *rstd = r;
}

}  // namespace

template <typename T>
void softmax_rows(std::span<const T> x, std::span<T> y, std::size_t rows, std::size_t n) {
  if (n == 0) throw ShapeError("softmax of an empty vector");
  require(x.size() == rows * n && y.size() == rows * n, "softmax_rows");
#pragma omp parallel for schedule(static)
  for (Index r = 0; r < static_cast<Index>(rows); ++r)
    softmax_row(x.data() + r * n, y.data() + r * n, n);
}

template <typename T>
void layernorm_rows(std::span<const T> x, std::span<const T> gain, std::span<const T> bias, std::span<T> y,
                    std::span<T> rstd, std::size_t rows, std::size_t n, T eps) {
  if (n == 0) throw ShapeError("layernorm of an empty vector");
  require(x.size() == rows * n && y.size() == rows * n && gain.size() == n && bias.size() == n &&
              (rstd.empty() || rstd.size() == rows),
          "layernorm_rows");
#pragma omp parallel for schedule(static)
  for (Index r = 0; r < static_cast<Index>(rows); ++r)
    layernorm_row(x.data() + r * n, gain.data(), bias.data(), y.data() + r * n,
                  rstd.empty() ? nullptr : rstd.data() + r, n, eps);
}

template <typename T>
void gelu(std::span<const T> x, std::span<T> y) {
  require(x.size() == y.size(), "gelu");
  const T inv_sqrt2 = static_cast<T>(1.0 / std::numbers::sqrt2);
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < static_cast<Index>(x.size()); ++i)
    y[i] = T{0.5} * x[i] * (T{1} + std::erf(x[i] * inv_sqrt2));
}

template <typename T>
T gelu_derivative(T x) {
  const T cdf = T{0.5} * (T{1} + std::erf(x * static_cast<T>(1.0 / std::numbers::sqrt2)));
  const T pdf = std::exp(T{-0.5} * x * x) * static_cast<T>(0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2);
  return cdf + x * pdf;
}

void set_thread_limit(int n) {
#ifdef _OPENMP
  omp_set_num_threads(n > 0 ? n : omp_get_num_procs());
#else
  (void)n;
#endif
}

int thread_limit() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace reference {

template <typename T>
void matmul(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m, std::size_t k,
            std::size_t n, bool accumulate) {
  require(a.size() == m * k && b.size() == k * n && c.size() == m * n, "reference::matmul");
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      T s = accumulate ? c[i * n + j] : T{0};
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
      c[i * n + j] = s;
    }
}

template <typename T>
void matmul_nt(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate) {
  require(a.size() == m * k && b.size() == n * k && c.size() == m * n, "reference::matmul_nt");
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      T s = accumulate ? c[i * n + j] : T{0};
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[j * k + p];
      c[i * n + j] = s;
    }
}

template <typename T>
void matmul_tn(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate) {
  require(a.size() == k * m && b.size() == k * n && c.size() == m * n, "reference::matmul_tn");
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      T s = accumulate ? c[i * n + j] : T{0};
      for (std::size_t p = 0; p < k; ++p) s += a[p * m + i] * b[p * n + j];
      c[i * n + j] = s;
    }
}

template <typename T>
void softmax_rows(std::span<const T> x, std::span<T> y, std::size_t rows, std::size_t n) {
  if (n == 0) throw ShapeError("softmax of an empty vector");
  require(x.size() == rows * n && y.size() == rows * n, "reference::softmax_rows");
  for (std::size_t r = 0; r < rows; ++r) softmax_row(x.data() + r * n, y.data() + r * n, n);
}

template <typename T>
void layernorm_rows(std::span<const T> x, std::span<const T> gain, std::span<const T> bias, std::span<T> y,
                    std::span<T> rstd, std::size_t rows, std::size_t n, T eps) {
  if (n == 0) throw ShapeError("layernorm of an empty vector");
  require(x.size() == rows * n && y.size() == rows * n, "reference::layernorm_rows");
  for (std::size_t r = 0; r < rows; ++r) {
    double mean = 0, var = 0;
    for (std::size_t j = 0; j < n; ++j) mean += x[r * n + j];
    mean /= static_cast<double>(n);
    for (std::size_t j = 0; j < n; ++j) var += (x[r * n + j] - mean) * (x[r * n + j] - mean);
    var /= static_cast<double>(n);
    const double inv = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j)
      y[r * n + j] = static_cast<T>((x[r * n + j] - mean) * inv * gain[j] + bias[j]);
    if (!rstd.empty()) rstd[r] = static_cast<T>(inv);
  }
}

}  // namespace reference

#define SVQA_INSTANTIATE_KERNELS(T)                                                                            \
  template void matmul<T>(std::span<const T>, std::span<const T>, std::span<T>, std::size_t, std::size_t,      \
                          std::size_t, bool);                                                                  \
  template void matmul_nt<T>(std::span<const T>, std::span<const T>, std::span<T>, std::size_t, std::size_t,   \
                             std::size_t, bool);                                                               \
  template void matmul_tn<T>(std::span<const T>, std::span<const T>, std::span<T>, std::size_t, std::size_t,   \
                             std::size_t, bool);                                                               \
  template void transpose<T>(std::span<const T>, std::span<T>, std::size_t, std::size_t);                      \
  template void softmax_rows<T>(std::span<const T>, std::span<T>, std::size_t, std::size_t);                   \
  template void layernorm_rows<T>(std::span<const T>, std::span<const T>, std::span<const T>, std::span<T>,    \
                                  std::span<T>, std::size_t, std::size_t, T);                                  \
  template void gelu<T>(std::span<const T>, std::span<T>);                                                     \
  template T gelu_derivative<T>(T);                                                                            \
  template void reference::matmul<T>(std::span<const T>, std::span<const T>, std::span<T>, std::size_t,        \
                                     std::size_t, std::size_t, bool);                                          \
  template void reference::matmul_nt<T>(std::span<const T>, std::span<const T>, std::span<T>, std::size_t,     \
                                        std::size_t, std::size_t, bool);                                       \
  template void reference::matmul_tn<T>(std::span<const T>, std::span<const T>, std::span<T>, std::size_t,     \
                                        std::size_t, std::size_t, bool);                                       \
  template void reference::softmax_rows<T>(std::span<const T>, std::span<T>, std::size_t, std::size_t);        \
  template void reference::layernorm_rows<T>(std::span<const T>, std::span<const T>, std::span<const T>,       \
                                             std::span<T>, std::span<T>, std::size_t, std::size_t, T);

SVQA_INSTANTIATE_KERNELS(float)
SVQA_INSTANTIATE_KERNELS(double)

}  // namespace starvqa::kernels
