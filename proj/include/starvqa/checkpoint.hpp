#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "starvqa/config.hpp"
#include "starvqa/trainer.hpp"

namespace starvqa {

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

struct CheckpointEntry {
  std::string name;
  DType dtype = DType::f64;
  Shape shape;
  std::vector<std::uint8_t> bytes;  // raw little-endian payload
};

/// Little-endian container: "SVQA", u32 version, config text, then named
/// typed tensors.
struct CheckpointFile {
  static constexpr std::uint32_t kVersion = 1;

  std::string config_text;
  std::vector<CheckpointEntry> entries;

  std::vector<std::uint8_t> encode() const;
  static CheckpointFile decode(std::span<const std::uint8_t> bytes);

  void save(const std::filesystem::path& path) const;
  static CheckpointFile load(const std::filesystem::path& path);

  const CheckpointEntry* find(std::string_view name) const;
  template <typename T>
  void put(std::string name, const Tensor<T>& t);
  template <typename T>
  Tensor<T> get(std::string_view name) const;
};

template <typename T>
struct Checkpoint {
  RunConfig config;
  Model<T> model;
  Adam<T> optimizer;
  std::size_t epoch = 0;
  std::vector<double> loss_history;  // per optimizer step
};

template <typename T>
CheckpointFile to_file(const Checkpoint<T>& ckpt);
template <typename T>
Checkpoint<T> from_file(const CheckpointFile& file);

/// Precision of the stored parameters.
Precision stored_precision(const CheckpointFile& file);

}  // namespace starvqa
