#pragma once

#include <vector>

#include "starvqa/autodiff.hpp"
#include "starvqa/config.hpp"
#include "starvqa/params.hpp"
#include "starvqa/preprocess.hpp"

namespace starvqa {

inline constexpr double kLayerNormEps = 1e-6;

/// Tape handles for one attention pass of one block.
template <typename T>
struct PassVars {
  ad::Var<T> ln_g, ln_b;
  ad::Var<T> w_q, w_k, w_v;  // heads × D_h × D, used as D×D
  ad::Var<T> w_o;            // D × D
};

template <typename T>
struct MlpVars {
  ad::Var<T> ln_g, ln_b, w1, b1, w2, b2;
};

template <typename T>
struct BlockVars {
  PassVars<T> time;
  PassVars<T> space;
  MlpVars<T> mlp;
};

template <typename T>
struct EmbedVars {
  ad::Var<T> proj;   // D × 3P²
  ad::Var<T> pos;    // tokens × D
  ad::Var<T> label;  // D
};

template <typename T>
struct Qkv {
  ad::Var<T> q, k, v;
};

/// Softmax weights observed during a forward pass, one entry per block.
template <typename T>
struct AttentionTrace {
  std::vector<AttentionWeights<T>> time;
  std::vector<AttentionWeights<T>> space;
};

/// Token sequence: row 0 = label token + its position row, row 1 + t·S + p
/// = proj·x(p,t) + pos(p,t).
template <typename T>
ad::Var<T> embed(ad::Tape<T>& tape, const PatchArray<T>& patches, const EmbedVars<T>& vars,
                 const EncoderConfig& config);

/// Per-head queries, keys and values of LN(tokens), label row included.
template <typename T>
Qkv<T> qkv_project(ad::Tape<T>& tape, const ad::Var<T>& tokens, const PassVars<T>& vars);

/// Each patch attends to the label token and to the tokens at its spatial
/// location in every frame. The label row passes through unchanged.
template <typename T>
ad::Var<T> time_attention(ad::Tape<T>& tape, const ad::Var<T>& tokens, const PassVars<T>& vars,
                          const EncoderConfig& config, AttentionWeights<T>* probe = nullptr);

/// Each patch attends to the label token and to every patch of its own
/// frame. The label token attends to itself and to all patches.
template <typename T>
ad::Var<T> space_attention(ad::Tape<T>& tape, const ad::Var<T>& tokens, const PassVars<T>& vars,
                           const EncoderConfig& config, AttentionWeights<T>* probe = nullptr);

/// Time attention, space attention, then MLP(LN(x)) + x.
template <typename T>
ad::Var<T> encode_block(ad::Tape<T>& tape, const ad::Var<T>& tokens, const BlockVars<T>& vars,
                        const EncoderConfig& config, AttentionTrace<T>* trace = nullptr);

/// Embedding followed by every block; returns the whole final sequence.
template <typename T>
ad::Var<T> encode_sequence(ad::Tape<T>& tape, const PatchArray<T>& patches, const EmbedVars<T>& embed_vars,
                           const std::vector<BlockVars<T>>& blocks, const EncoderConfig& config,
                           AttentionTrace<T>* trace = nullptr);

/// Final label-token embedding (1 × D).
template <typename T>
ad::Var<T> forward_trunk(ad::Tape<T>& tape, const PatchArray<T>& patches, const EmbedVars<T>& embed_vars,
                         const std::vector<BlockVars<T>>& blocks, const EncoderConfig& config,
                         AttentionTrace<T>* trace = nullptr);

}  // namespace starvqa
