#include "starvqa/params.hpp"

#include <random>

#include "starvqa/errors.hpp"

namespace starvqa {

template <typename T>
std::size_t ParamStore<T>::add(std::string name, Shape shape, T fill) {
  if (index_.count(name)) throw ContractError("duplicate parameter " + name);
  index_.emplace(name, tensors_.size());
  names_.push_back(std::move(name));
  tensors_.emplace_back(std::move(shape), fill);
  return tensors_.size() - 1;
}

template <typename T>
std::optional<std::size_t> ParamStore<T>::find(std::string_view name) const {
  const auto it = index_.find(std::string(name));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

template <typename T>
Tensor<T>& ParamStore<T>::at(std::string_view name) {
  const auto i = find(name);
  if (!i) throw ContractError("no parameter named " + std::string(name));
  return tensors_[*i];
}

template <typename T>
const Tensor<T>& ParamStore<T>::at(std::string_view name) const {
  const auto i = find(name);
  if (!i) throw ContractError("no parameter named " + std::string(name));
  return tensors_[*i];
}

template <typename T>
std::size_t ParamStore<T>::scalar_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.size();
  return n;
}

bool is_layernorm_gain(std::string_view name) { return name.ends_with(".ln_g"); }

bool is_bias(std::string_view name) {
  return name.ends_with(".ln_b") || name.ends_with(".b1") || name.ends_with(".b2");
}

template <typename T>
ParamStore<T> make_params(const EncoderConfig& c) {
  c.validate();
  const std::size_t d = c.dim;
  ParamStore<T> p;
  p.add("embed.proj", {d, c.patch_length()});
  p.add("embed.pos", {c.tokens(), d});
  p.add("embed.label", {d});
  for (std::size_t l = 0; l < c.blocks; ++l) {
    const std::string b = "b" + std::to_string(l) + ".";
    for (const char* pass : {"time", "space"}) {
      const std::string pre = b + pass + ".";
      p.add(pre + "ln_g", {d}, T{1});
      p.add(pre + "ln_b", {d});
      p.add(pre + "w_q", {c.heads, c.head_dim(), d});
      p.add(pre + "w_k", {c.heads, c.head_dim(), d});
      p.add(pre + "w_v", {c.heads, c.head_dim(), d});
      p.add(pre + "w_o", {d, d});
    }
    p.add(b + "mlp.ln_g", {d}, T{1});
    p.add(b + "mlp.ln_b", {d});
    p.add(b + "mlp.w1", {c.mlp_width(), d});
    p.add(b + "mlp.b1", {c.mlp_width()});
    p.add(b + "mlp.w2", {d, c.mlp_width()});
    p.add(b + "mlp.b2", {d});
  }
  p.add("head.w1", {c.head_width(), d});
  p.add("head.b1", {c.head_width()});
  p.add("head.w2", {6, c.head_width()});
  p.add("head.b2", {6});
  return p;
}

template <typename T>
void init_params(ParamStore<T>& params, std::uint64_t seed, double stddev) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& name = params.name(i);
    auto& t = params[i];
    if (is_layernorm_gain(name)) {
      t.fill(T{1});
    } else if (is_bias(name)) {
      t.fill(T{0});
    } else {
      for (auto& x : t.values()) {
        double z;
        do z = normal(rng);
        while (z < -2.0 || z > 2.0);
        x = static_cast<T>(z * stddev);
      }
    }
  }
}

template class ParamStore<float>;
template class ParamStore<double>;
template ParamStore<float> make_params<float>(const EncoderConfig&);
template ParamStore<double> make_params<double>(const EncoderConfig&);
template void init_params<float>(ParamStore<float>&, std::uint64_t, double);
template void init_params<double>(ParamStore<double>&, std::uint64_t, double);

}  // namespace starvqa
