#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace starvqa {

enum class AttentionPass { time, space };

/// Token row order: row 0 is the label token, then all patches of frame 0,
/// all patches of frame 1, and so on (t-major).
struct TokenLayout {
  std::size_t frames = 0;
  std::size_t patches = 0;  // per frame

  std::size_t tokens() const { return frames * patches + 1; }
  std::size_t row(std::size_t patch, std::size_t frame) const { return 1 + frame * patches + patch; }
  std::size_t patch_of(std::size_t row) const { return (row - 1) % patches; }
  std::size_t frame_of(std::size_t row) const { return (row - 1) / patches; }
};

/// Number of keys the query in `row` attends over. Patch queries see the
/// label token plus the F tokens at their location (time) or the S tokens
/// of their frame (space). The label query sees nothing in the time pass
/// and every token in the space pass.
std::size_t attention_key_count(AttentionPass pass, const TokenLayout& layout, std::size_t row);

/// j-th key row for the query in `row`; j = 0 is always the label token.
std::size_t attention_key(AttentionPass pass, const TokenLayout& layout, std::size_t row, std::size_t j);

std::vector<std::size_t> attention_keys(AttentionPass pass, const TokenLayout& layout, std::size_t row);

/// Softmax weights saved by the forward pass, one probability vector per
/// (row, head).
template <typename T>
struct AttentionWeights {
  std::size_t heads = 0;
  std::vector<std::size_t> offsets;  // tokens + 1 entries
  std::vector<T> probs;

  std::size_t key_count(std::size_t row) const { return (offsets[row + 1] - offsets[row]) / heads; }
  std::span<const T> at(std::size_t row, std::size_t head) const {
    const std::size_t n = key_count(row);
    return std::span<const T>(probs).subspan(offsets[row] + head * n, n);
  }
};

/// Multi-head divided attention. q, k, v and out are tokens×D, each head
/// owning a contiguous D/heads slice. Rows with no keys produce zeros.
template <typename T>
void divided_attention_forward(AttentionPass pass, const TokenLayout& layout, std::size_t heads,
                               std::span<const T> q, std::span<const T> k, std::span<const T> v,
                               std::span<T> out, AttentionWeights<T>& weights);

/// Accumulates vector-Jacobian products into dq, dk, dv.
template <typename T>
void divided_attention_backward(AttentionPass pass, const TokenLayout& layout, std::size_t heads,
                                std::span<const T> q, std::span<const T> k, std::span<const T> v,
                                const AttentionWeights<T>& weights, std::span<const T> dout, std::span<T> dq,
                                std::span<T> dk, std::span<T> dv);

namespace reference {

template <typename T>
void divided_attention_forward(AttentionPass pass, const TokenLayout& layout, std::size_t heads,
                               std::span<const T> q, std::span<const T> k, std::span<const T> v,
                               std::span<T> out, AttentionWeights<T>& weights);

template <typename T>
void divided_attention_backward(AttentionPass pass, const TokenLayout& layout, std::size_t heads,
                                std::span<const T> q, std::span<const T> k, std::span<const T> v,
                                const AttentionWeights<T>& weights, std::span<const T> dout, std::span<T> dq,
                                std::span<T> dk, std::span<T> dv);

}  // namespace reference

}  // namespace starvqa
