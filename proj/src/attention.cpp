#include "starvqa/attention.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "starvqa/errors.hpp"

namespace starvqa {

std::size_t attention_key_count(AttentionPass pass, const TokenLayout& layout, std::size_t row) {
  if (row == 0) return pass == AttentionPass::time ? 0 : layout.tokens();
  return 1 + (pass == AttentionPass::time ? layout.frames : layout.patches);
}

std::size_t attention_key(AttentionPass pass, const TokenLayout& layout, std::size_t row, std::size_t j) {
  if (j == 0) return 0;
  if (row == 0) return j;  // space pass, label query: every token in order
  if (pass == AttentionPass::time) return layout.row(layout.patch_of(row), j - 1);
  return layout.row(j - 1, layout.frame_of(row));
}

std::vector<std::size_t> attention_keys(AttentionPass pass, const TokenLayout& layout, std::size_t row) {
  std::vector<std::size_t> keys(attention_key_count(pass, layout, row));
  for (std::size_t j = 0; j < keys.size(); ++j) keys[j] = attention_key(pass, layout, row, j);
  return keys;
}

namespace {

using Index = std::ptrdiff_t;

void check_buffers(const TokenLayout& layout, std::size_t heads, std::size_t q, std::size_t k, std::size_t v,
                   std::size_t out) {
  const std::size_t n = layout.tokens();
  if (heads == 0 || layout.frames == 0 || layout.patches == 0)
    throw ShapeError("divided attention needs at least one frame, patch and head");
  if (q % n != 0 || q != k || q != v || q != out)
    throw ShapeError("divided attention buffers must all be tokens x D with tokens = " + std::to_string(n));
  if ((q / n) % heads != 0)
    throw ShapeError("embedding width " + std::to_string(q / n) + " not divisible by " + std::to_string(heads) +
                     " heads");
}

template <typename T>
void prepare_weights(AttentionPass pass, const TokenLayout& layout, std::size_t heads, AttentionWeights<T>& w) {
  const std::size_t n = layout.tokens();
  w.heads = heads;
  w.offsets.assign(n + 1, 0);
  for (std::size_t r = 0; r < n; ++r) w.offsets[r + 1] = w.offsets[r] + heads * attention_key_count(pass, layout, r);
  w.probs.assign(w.offsets[n], T{0});
}

template <typename T>
T dot(const T* a, const T* b, std::size_t n) {
  T s = 0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

// One (row, head) forward: logits, softmax, weighted value sum.
template <typename T>
void attend(AttentionPass pass, const TokenLayout& layout, std::size_t row, std::size_t head, std::size_t dim,
            std::size_t dh, const T* q, const T* k, const T* v, T* out, T* probs) {
  const std::size_t nk = attention_key_count(pass, layout, row);
  const std::size_t off = head * dh;
  T* o = out + row * dim + off;
  std::fill(o, o + dh, T{0});
  if (nk == 0) return;
  const T scale = T{1} / std::sqrt(static_cast<T>(dh));
  const T* qr = q + row * dim + off;
  T mx = -std::numeric_limits<T>::infinity();
  for (std::size_t j = 0; j < nk; ++j) {
    probs[j] = dot(qr, k + attention_key(pass, layout, row, j) * dim + off, dh) * scale;
    mx = std::max(mx, probs[j]);
  }
  T sum = 0;
  for (std::size_t j = 0; j < nk; ++j) {
    probs[j] = std::exp(probs[j] - mx);
    sum += probs[j];
  }
  const T inv = T{1} / sum;
  for (std::size_t j = 0; j < nk; ++j) {
    probs[j] *= inv;
    const T* vj = v + attention_key(pass, layout, row, j) * dim + off;
    for (std::size_t d = 0; d < dh; ++d) o[d] += probs[j] * vj[d];
  }
}

// One (row, head) backward. Key/value gradients for key j go to
// dk_row(j)/dv_row(j), which lets the caller redirect label-token
// contributions into per-group scratch space.
template <typename T, typename KeyGrad>
void attend_backward(AttentionPass pass, const TokenLayout& layout, std::size_t row, std::size_t head,
                     std::size_t dim, std::size_t dh, const T* q, const T* k, const T* v, const T* probs,
                     const T* dout, T* dq, KeyGrad&& key_grad, std::vector<T>& scratch) {
  const std::size_t nk = attention_key_count(pass, layout, row);
  if (nk == 0) return;
  const std::size_t off = head * dh;
  const T scale = T{1} / std::sqrt(static_cast<T>(dh));
  const T* ds = dout + row * dim + off;
  const T* qr = q + row * dim + off;
  scratch.resize(nk);
  T g = 0;
  for (std::size_t j = 0; j < nk; ++j) {
    scratch[j] = dot(ds, v + attention_key(pass, layout, row, j) * dim + off, dh);
    g += probs[j] * scratch[j];
  }
  T* dqr = dq + row * dim + off;
  for (std::size_t j = 0; j < nk; ++j) {
    const std::size_t key = attention_key(pass, layout, row, j);
    const T dlogit = probs[j] * (scratch[j] - g) * scale;
    auto [dkj, dvj] = key_grad(key);
    const T* kj = k + key * dim + off;
    for (std::size_t d = 0; d < dh; ++d) {
      dqr[d] += dlogit * kj[d];
      dkj[off + d] += dlogit * qr[d];
      dvj[off + d] += probs[j] * ds[d];
    }
  }
}

}  // namespace

template <typename T>
void divided_attention_forward(AttentionPass pass, const TokenLayout& layout, std::size_t heads,
                               std::span<const T> q, std::span<const T> k, std::span<const T> v,
                               std::span<T> out, AttentionWeights<T>& weights) {
  check_buffers(layout, heads, q.size(), k.size(), v.size(), out.size());
  prepare_weights(pass, layout, heads, weights);
  const std::size_t n = layout.tokens();
  const std::size_t dim = q.size() / n;
  const std::size_t dh = dim / heads;
#pragma omp parallel for schedule(dynamic, 8)
  for (Index r = 0; r < static_cast<Index>(n); ++r) {
    const std::size_t row = static_cast<std::size_t>(r);
    const std::size_t nk = attention_key_count(pass, layout, row);
    for (std::size_t a = 0; a < heads; ++a)
      attend(pass, layout, row, a, dim, dh, q.data(), k.data(), v.data(), out.data(),
             weights.probs.data() + weights.offsets[row] + a * nk);
  }
}

template <typename T>
void divided_attention_backward(AttentionPass pass, const TokenLayout& layout, std::size_t heads,
                                std::span<const T> q, std::span<const T> k, std::span<const T> v,
                                const AttentionWeights<T>& weights, std::span<const T> dout, std::span<T> dq,
                                std::span<T> dk, std::span<T> dv) {
  check_buffers(layout, heads, q.size(), k.size(), v.size(), dout.size());
  if (dq.size() != q.size() || dk.size() != q.size() || dv.size() != q.size())
    throw ShapeError("divided attention gradient buffers must match q/k/v");
  const std::size_t n = layout.tokens();
  const std::size_t dim = q.size() / n;
  const std::size_t dh = dim / heads;

  // Patch queries split into independent groups (one spatial location for
  // the time pass, one frame for the space pass). A group only touches its
  // own rows plus the label token, whose gradient goes to per-group scratch
  // and is reduced in group order afterwards.
  const bool time = pass == AttentionPass::time;
  const std::size_t groups = time ? layout.patches : layout.frames;
  const std::size_t members = time ? layout.frames : layout.patches;
  std::vector<T> label_dk(groups * dim, T{0});
  std::vector<T> label_dv(groups * dim, T{0});

#pragma omp parallel for schedule(static)
  for (Index gi = 0; gi < static_cast<Index>(groups); ++gi) {
    const std::size_t g = static_cast<std::size_t>(gi);
    std::vector<T> scratch;
    T* gdk = label_dk.data() + g * dim;
    T* gdv = label_dv.data() + g * dim;
    auto key_grad = [&](std::size_t key) {
      if (key == 0) return std::pair<T*, T*>{gdk, gdv};
      return std::pair<T*, T*>{dk.data() + key * dim, dv.data() + key * dim};
    };
    for (std::size_t m = 0; m < members; ++m) {
      const std::size_t row = time ? layout.row(g, m) : layout.row(m, g);
      const std::size_t nk = attention_key_count(pass, layout, row);
      for (std::size_t a = 0; a < heads; ++a)
        attend_backward(pass, layout, row, a, dim, dh, q.data(), k.data(), v.data(),
                        weights.probs.data() + weights.offsets[row] + a * nk, dout.data(), dq.data(), key_grad,
                        scratch);
    }
  }
  for (std::size_t g = 0; g < groups; ++g)
    for (std::size_t d = 0; d < dim; ++d) {
      dk[d] += label_dk[g * dim + d];
      dv[d] += label_dv[g * dim + d];
    }

  // Label query (space pass only) reads every row; done last, serially.
  const std::size_t nk0 = attention_key_count(pass, layout, 0);
  if (nk0 > 0) {
    std::vector<T> scratch;
    auto key_grad = [&](std::size_t key) { return std::pair<T*, T*>{dk.data() + key * dim, dv.data() + key * dim}; };
    for (std::size_t a = 0; a < heads; ++a)
      attend_backward(pass, layout, 0, a, dim, dh, q.data(), k.data(), v.data(),
                      weights.probs.data() + weights.offsets[0] + a * nk0, dout.data(), dq.data(), key_grad,
                      scratch);
  }
}

namespace reference {

template <typename T>
void divided_attention_forward(AttentionPass pass, const TokenLayout& layout, std::size_t heads,
                               std::span<const T> q, std::span<const T> k, std::span<const T> v,
                               std::span<T> out, AttentionWeights<T>& weights) {
  check_buffers(layout, heads, q.size(), k.size(), v.size(), out.size());
  prepare_weights(pass, layout, heads, weights);
  const std::size_t n = layout.tokens();
  const std::size_t dim = q.size() / n;
  const std::size_t dh = dim / heads;
  const T scale = T{1} / std::sqrt(static_cast<T>(dh));
  std::fill(out.begin(), out.end(), T{0});
  for (std::size_t r = 0; r < n; ++r) {
    const auto keys = attention_keys(pass, layout, r);
    for (std::size_t a = 0; a < heads; ++a) {
      if (keys.empty()) continue;
      std::vector<T> logits(keys.size());
      for (std::size_t j = 0; j < keys.size(); ++j) {
        T s = 0;
        for (std::size_t d = 0; d < dh; ++d) s += q[r * dim + a * dh + d] * k[keys[j] * dim + a * dh + d];
        logits[j] = s * scale;
      }
      const T mx = *std::max_element(logits.begin(), logits.end());
      T z = 0;
      for (auto& l : logits) z += (l = std::exp(l - mx));
      T* p = weights.probs.data() + weights.offsets[r] + a * keys.size();
      for (std::size_t j = 0; j < keys.size(); ++j) {
        p[j] = logits[j] / z;
        for (std::size_t d = 0; d < dh; ++d) out[r * dim + a * dh + d] += p[j] * v[keys[j] * dim + a * dh + d];
      }
    }
  }
}

template <typename T>
void divided_attention_backward(AttentionPass pass, const TokenLayout& layout, std::size_t heads,
                                std::span<const T> q, std::span<const T> k, std::span<const T> v,
                                const AttentionWeights<T>& weights, std::span<const T> dout, std::span<T> dq,
                                std::span<T> dk, std::span<T> dv) {
  check_buffers(layout, heads, q.size(), k.size(), v.size(), dout.size());
  const std::size_t n = layout.tokens();
  const std::size_t dim = q.size() / n;
  const std::size_t dh = dim / heads;
  const T scale = T{1} / std::sqrt(static_cast<T>(dh));
  for (std::size_t r = 0; r < n; ++r) {
    const auto keys = attention_keys(pass, layout, r);
    for (std::size_t a = 0; a < heads; ++a) {
      if (keys.empty()) continue;
      const auto p = weights.at(r, a);
      std::vector<T> dp(keys.size());
      T g = 0;
      for (std::size_t j = 0; j < keys.size(); ++j) {
        for (std::size_t d = 0; d < dh; ++d) dp[j] += dout[r * dim + a * dh + d] * v[keys[j] * dim + a * dh + d];
        g += p[j] * dp[j];
      }
      for (std::size_t j = 0; j < keys.size(); ++j) {
        const T dl = p[j] * (dp[j] - g) * scale;
        for (std::size_t d = 0; d < dh; ++d) {
          dq[r * dim + a * dh + d] += dl * k[keys[j] * dim + a * dh + d];
          dk[keys[j] * dim + a * dh + d] += dl * q[r * dim + a * dh + d];
          dv[keys[j] * dim + a * dh + d] += p[j] * dout[r * dim + a * dh + d];
        }
      }
    }
  }
}

}  // namespace reference

#define SVQA_INSTANTIATE_ATTENTION(NS, T)                                                                       \
  template void NS::divided_attention_forward<T>(AttentionPass, const TokenLayout&, std::size_t,                 \
                                                 std::span<const T>, std::span<const T>, std::span<const T>,     \
                                                 std::span<T>, AttentionWeights<T>&);                            \
  template void NS::divided_attention_backward<T>(AttentionPass, const TokenLayout&, std::size_t,                \
                                                  std::span<const T>, std::span<const T>, std::span<const T>,    \
                                                  const AttentionWeights<T>&, std::span<const T>, std::span<T>,  \
                                                  std::span<T>, std::span<T>);

SVQA_INSTANTIATE_ATTENTION(starvqa, float)
SVQA_INSTANTIATE_ATTENTION(starvqa, double)
SVQA_INSTANTIATE_ATTENTION(starvqa::reference, float)
SVQA_INSTANTIATE_ATTENTION(starvqa::reference, double)

}  // namespace starvqa
