#include "starvqa/encoder.hpp"

#include "starvqa/errors.hpp"

namespace starvqa {

template <typename T>
ad::Var<T> embed(ad::Tape<T>& tape, const PatchArray<T>& patches, const EmbedVars<T>& vars,
                 const EncoderConfig& config) {
  if (patches.frames != config.frames || patches.patches != config.patches_per_frame())
    throw ShapeError("patch array has " + std::to_string(patches.frames) + " frames x " +
                     std::to_string(patches.patches) + " patches, config expects " + std::to_string(config.frames) +
                     " x " + std::to_string(config.patches_per_frame()));
  if (patches.data.cols() != vars.proj.value().cols())
    throw ShapeError("patch length " + std::to_string(patches.data.cols()) + " does not match projection " +
                     to_string(vars.proj.value().shape()));
  auto x = tape.constant(patches.data, "patches");
  auto projected = ad::linear(tape, x, vars.proj);
  auto tokens = ad::prepend_row(tape, vars.label, projected);
  return ad::add(tape, tokens, vars.pos);
}

template <typename T>
Qkv<T> qkv_project(ad::Tape<T>& tape, const ad::Var<T>& tokens, const PassVars<T>& vars) {
  auto normed = ad::layer_norm(tape, tokens, vars.ln_g, vars.ln_b, static_cast<T>(kLayerNormEps));
  return {ad::linear(tape, normed, vars.w_q), ad::linear(tape, normed, vars.w_k), ad::linear(tape, normed, vars.w_v)};
}

namespace {

template <typename T>
ad::Var<T> attention_pass(ad::Tape<T>& tape, const ad::Var<T>& tokens, const PassVars<T>& vars,
                          const EncoderConfig& config, AttentionPass pass, AttentionWeights<T>* probe) {
  const auto qkv = qkv_project(tape, tokens, vars);
  auto s = ad::divided_attention(tape, qkv.q, qkv.k, qkv.v, pass, config.layout(), config.heads, probe);
  return ad::add(tape, ad::linear(tape, s, vars.w_o), tokens);
}

}  // namespace

template <typename T>
ad::Var<T> time_attention(ad::Tape<T>& tape, const ad::Var<T>& tokens, const PassVars<T>& vars,
                          const EncoderConfig& config, AttentionWeights<T>* probe) {
  return attention_pass(tape, tokens, vars, config, AttentionPass::time, probe);
}

template <typename T>
ad::Var<T> space_attention(ad::Tape<T>& tape, const ad::Var<T>& tokens, const PassVars<T>& vars,
                           const EncoderConfig& config, AttentionWeights<T>* probe) {
  return attention_pass(tape, tokens, vars, config, AttentionPass::space, probe);
}

template <typename T>
ad::Var<T> encode_block(ad::Tape<T>& tape, const ad::Var<T>& tokens, const BlockVars<T>& vars,
                        const EncoderConfig& config, AttentionTrace<T>* trace) {
  AttentionWeights<T>* time_probe = nullptr;
  AttentionWeights<T>* space_probe = nullptr;
  if (trace) {
    time_probe = &trace->time.emplace_back();
    space_probe = &trace->space.emplace_back();
  }
  auto after_time = time_attention(tape, tokens, vars.time, config, time_probe);
  auto after_space = space_attention(tape, after_time, vars.space, config, space_probe);
  const auto& m = vars.mlp;
  auto h = ad::layer_norm(tape, after_space, m.ln_g, m.ln_b, static_cast<T>(kLayerNormEps));
  h = ad::gelu(tape, ad::add_bias(tape, ad::linear(tape, h, m.w1), m.b1));
  h = ad::add_bias(tape, ad::linear(tape, h, m.w2), m.b2);
  return ad::add(tape, h, after_space);
}

template <typename T>
ad::Var<T> encode_sequence(ad::Tape<T>& tape, const PatchArray<T>& patches, const EmbedVars<T>& embed_vars,
                           const std::vector<BlockVars<T>>& blocks, const EncoderConfig& config,
                           AttentionTrace<T>* trace) {
  auto tokens = embed(tape, patches, embed_vars, config);
  for (const auto& block : blocks) tokens = encode_block(tape, tokens, block, config, trace);
  return tokens;
}

template <typename T>
ad::Var<T> forward_trunk(ad::Tape<T>& tape, const PatchArray<T>& patches, const EmbedVars<T>& embed_vars,
                         const std::vector<BlockVars<T>>& blocks, const EncoderConfig& config,
                         AttentionTrace<T>* trace) {
  return ad::take_row(tape, encode_sequence(tape, patches, embed_vars, blocks, config, trace), 0);
}

#define SVQA_INSTANTIATE_ENCODER(T)                                                                               \
  template ad::Var<T> embed<T>(ad::Tape<T>&, const PatchArray<T>&, const EmbedVars<T>&, const EncoderConfig&);     \
  template Qkv<T> qkv_project<T>(ad::Tape<T>&, const ad::Var<T>&, const PassVars<T>&);                             \
  template ad::Var<T> time_attention<T>(ad::Tape<T>&, const ad::Var<T>&, const PassVars<T>&, const EncoderConfig&, \
                                        AttentionWeights<T>*);                                                     \
  template ad::Var<T> space_attention<T>(ad::Tape<T>&, const ad::Var<T>&, const PassVars<T>&,                      \
                                         const EncoderConfig&, AttentionWeights<T>*);                              \
  template ad::Var<T> encode_block<T>(ad::Tape<T>&, const ad::Var<T>&, const BlockVars<T>&, const EncoderConfig&,  \
                                      AttentionTrace<T>*);                                                         \
  template ad::Var<T> encode_sequence<T>(ad::Tape<T>&, const PatchArray<T>&, const EmbedVars<T>&,                  \
                                         const std::vector<BlockVars<T>>&, const EncoderConfig&,                   \
                                         AttentionTrace<T>*);                                                      \
  template ad::Var<T> forward_trunk<T>(ad::Tape<T>&, const PatchArray<T>&, const EmbedVars<T>&,                    \
                                       const std::vector<BlockVars<T>>&, const EncoderConfig&, AttentionTrace<T>*);

SVQA_INSTANTIATE_ENCODER(float)
SVQA_INSTANTIATE_ENCODER(double)

}  // namespace starvqa
