#include "starvqa/model.hpp"

namespace starvqa {

template <typename T>
Model<T> Model<T>::create(const EncoderConfig& config, std::uint64_t seed, double init_std) {
  Model m{config, make_params<T>(config), std::nullopt};
  init_params(m.params, seed, init_std);
  return m;
}

template <typename T>
Model<T> Model<T>::zeros(const EncoderConfig& config) {
  return Model{config, make_params<T>(config), std::nullopt};
}

template <typename T>
ModelVars<T> bind_params(ad::Tape<T>& tape, const ParamStore<T>& params, const EncoderConfig& config) {
  ModelVars<T> v;
  v.all.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) v.all.push_back(tape.parameter(params[i], params.name(i)));
  auto get = [&](const std::string& name) { return v.all.at(*params.find(name)); };
  v.embed = {get("embed.proj"), get("embed.pos"), get("embed.label")};
  for (std::size_t l = 0; l < config.blocks; ++l) {
    const std::string b = "b" + std::to_string(l) + ".";
    auto pass = [&](const std::string& p) {
      const std::string pre = b + p + ".";
      return PassVars<T>{get(pre + "ln_g"), get(pre + "ln_b"), get(pre + "w_q"),
                         get(pre + "w_k"),  get(pre + "w_v"),  get(pre + "w_o")};
    };
    BlockVars<T> block{pass("time"), pass("space"),
                       MlpVars<T>{get(b + "mlp.ln_g"), get(b + "mlp.ln_b"), get(b + "mlp.w1"), get(b + "mlp.b1"),
                                  get(b + "mlp.w2"), get(b + "mlp.b2")}};
    v.blocks.push_back(std::move(block));
  }
  v.head = {get("head.w1"), get("head.b1"), get("head.w2"), get("head.b2")};
  return v;
}

template <typename T>
ad::Var<T> forward(ad::Tape<T>& tape, const ModelVars<T>& vars, const PatchArray<T>& patches,
                   const EncoderConfig& config, AttentionTrace<T>* trace) {
  auto label = forward_trunk(tape, patches, vars.embed, vars.blocks, config, trace);
  return predict_vector(tape, label, vars.head);
}

template <typename T>
QualityVector predict(const Model<T>& model, const PatchArray<T>& patches) {
  ad::Tape<T> tape(false);
  const auto vars = bind_params(tape, model.params, model.config);
  return to_quality_vector(forward(tape, vars, patches, model.config).value());
}

template struct Model<float>;
template struct Model<double>;
template ModelVars<float> bind_params<float>(ad::Tape<float>&, const ParamStore<float>&, const EncoderConfig&);
template ModelVars<double> bind_params<double>(ad::Tape<double>&, const ParamStore<double>&, const EncoderConfig&);
template ad::Var<float> forward<float>(ad::Tape<float>&, const ModelVars<float>&, const PatchArray<float>&,
                                       const EncoderConfig&, AttentionTrace<float>*);
template ad::Var<double> forward<double>(ad::Tape<double>&, const ModelVars<double>&, const PatchArray<double>&,
                                         const EncoderConfig&, AttentionTrace<double>*);
template QualityVector predict<float>(const Model<float>&, const PatchArray<float>&);
template QualityVector predict<double>(const Model<double>&, const PatchArray<double>&);

}  // namespace starvqa
