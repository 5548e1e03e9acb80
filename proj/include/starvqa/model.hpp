#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "starvqa/encoder.hpp"
#include "starvqa/quality_head.hpp"

namespace starvqa {

template <typename T>
struct Model {
  EncoderConfig config;
  ParamStore<T> params;
  std::optional<LinearDecoder> decoder;

  /// Randomly initialized model.
  static Model create(const EncoderConfig& config, std::uint64_t seed, double init_std = 0.02);
  /// All weights, biases and tokens zero; layernorm gains one.
  static Model zeros(const EncoderConfig& config);
};

/// Every parameter as a tape leaf, grouped by role. `all` follows
/// registry order.
template <typename T>
struct ModelVars {
  EmbedVars<T> embed;
  std::vector<BlockVars<T>> blocks;
  HeadVars<T> head;
  std::vector<ad::Var<T>> all;
};

template <typename T>
ModelVars<T> bind_params(ad::Tape<T>& tape, const ParamStore<T>& params, const EncoderConfig& config);

/// Trunk + head: the predicted quality vector (1 × 6).
template <typename T>
ad::Var<T> forward(ad::Tape<T>& tape, const ModelVars<T>& vars, const PatchArray<T>& patches,
                   const EncoderConfig& config, AttentionTrace<T>* trace = nullptr);

/// Inference without recording gradients.
template <typename T>
QualityVector predict(const Model<T>& model, const PatchArray<T>& patches);

}  // namespace starvqa
