#pragma once

#include <cstdint>
#include <filesystem>

#include "starvqa/manifest.hpp"
#include "starvqa/ppm.hpp"

namespace starvqa {

/// Procedural clips on a degradation ladder: clip c gets Gaussian blur with
/// sigma c·blur_step and additive noise with sigma c·noise_step, and raw MOS
/// 100 − c·100/clips on a 0..100 scale.
struct SyntheticSpec {
  std::size_t clips = 8;
  std::size_t frames = 8;
  std::size_t height = 16;
  std::size_t width = 16;
  double blur_step = 0.6;
  double noise_step = 4.0;
  std::uint64_t seed = 0;
};

double synthetic_mos(const SyntheticSpec& spec, std::size_t level);

/// Undegraded frame `index` of clip `clip`.
Image render_frame(const SyntheticSpec& spec, std::size_t clip, std::size_t index);

Image gaussian_blur(const Image& image, double sigma);
Image add_noise(const Image& image, double sigma, std::uint64_t seed);

/// Writes clip_XX/frame_NNNNN.ppm directories and manifest.csv under `dir`;
/// returns the manifest as loaded from disk.
Manifest make_synthetic(const SyntheticSpec& spec, const std::filesystem::path& dir);

}  // namespace starvqa
