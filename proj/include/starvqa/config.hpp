#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "starvqa/attention.hpp"

namespace starvqa {

enum class Precision { f32, f64 };
enum class DecoderMode { expectation, linear_fit };

std::string_view to_string(Precision p);
std::string_view to_string(DecoderMode m);

/// Trunk and head dimensions. Defaults are the full-size model: 8 frames of
/// 224×224 cut into 16×16 patches, D = 768, 12 heads, 12 blocks.
struct EncoderConfig {
  std::size_t frames = 8;
  std::size_t height = 224;
  std::size_t width = 224;
  std::size_t patch = 16;
  std::size_t dim = 768;
  std::size_t heads = 12;
  std::size_t blocks = 12;
  std::size_t mlp_hidden = 0;   // 0 means 4·dim
  std::size_t head_hidden = 0;  // 0 means dim

  std::size_t patches_per_frame() const { return (height / patch) * (width / patch); }
  std::size_t tokens() const { return patches_per_frame() * frames + 1; }
  std::size_t head_dim() const { return dim / heads; }
  std::size_t patch_length() const { return 3 * patch * patch; }
  std::size_t mlp_width() const { return mlp_hidden ? mlp_hidden : 4 * dim; }
  std::size_t head_width() const { return head_hidden ? head_hidden : dim; }
  TokenLayout layout() const { return {frames, patches_per_frame()}; }

  void validate() const;

  /// F=2, 8×8 frames, P=4, D=8, A=2, L=2: the gradient-check instance.
  static EncoderConfig tiny();

  bool operator==(const EncoderConfig&) const = default;
};

/// Closed-form count of learnable scalars for a config.
std::size_t parameter_count(const EncoderConfig& config);

struct TrainConfig {
  std::size_t epochs = 1;
  std::size_t batch_size = 4;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  double split = 0.8;  // training fraction
  std::size_t rounds = 1;
  double init_std = 0.02;
  Precision precision = Precision::f32;
  DecoderMode decoder = DecoderMode::expectation;

  void validate() const;
};

/// Everything a run needs, as `key = value` lines. `#` starts a comment.
/// Unknown keys are rejected.
struct RunConfig {
  EncoderConfig encoder;
  TrainConfig train;

  static RunConfig parse(std::string_view text);
  static RunConfig load(const std::filesystem::path& path);

  /// Applies one key/value pair (same keys as the text format).
  void set(std::string_view key, std::string_view value);

  /// Effective configuration, every key, in canonical order.
  std::string to_text() const;
};

}  // namespace starvqa
