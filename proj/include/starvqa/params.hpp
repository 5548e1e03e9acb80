#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "starvqa/config.hpp"
#include "starvqa/tensor.hpp"

namespace starvqa {

/// Ordered registry of named parameter tensors. Registration order is the
/// iteration order everywhere: initialization, gradient reduction,
/// optimizer updates and checkpoints.
template <typename T>
class ParamStore {
 public:
  std::size_t add(std::string name, Shape shape, T fill = T{0});

  std::size_t size() const { return tensors_.size(); }
  const std::string& name(std::size_t i) const { return names_[i]; }
  Tensor<T>& operator[](std::size_t i) { return tensors_[i]; }
  const Tensor<T>& operator[](std::size_t i) const { return tensors_[i]; }

  std::optional<std::size_t> find(std::string_view name) const;
  Tensor<T>& at(std::string_view name);
  const Tensor<T>& at(std::string_view name) const;

  std::size_t scalar_count() const;

  bool operator==(const ParamStore& other) const {
    return names_ == other.names_ && tensors_ == other.tensors_;
  }

 private:
  std::vector<std::string> names_;
  std::vector<Tensor<T>> tensors_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Registers every tensor of the model with weights zero and layernorm
/// gains one.
template <typename T>
ParamStore<T> make_params(const EncoderConfig& config);

/// Truncated normal (±2 std) for projections, MLP weights, position table
/// and label token; biases 0; layernorm gains 1.
template <typename T>
void init_params(ParamStore<T>& params, std::uint64_t seed, double stddev);

/// Parameters whose name ends in one of these are not drawn at init.
bool is_layernorm_gain(std::string_view name);
bool is_bias(std::string_view name);

}  // namespace starvqa
