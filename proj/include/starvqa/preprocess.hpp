#pragma once

#include <cstddef>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "starvqa/ppm.hpp"
#include "starvqa/tensor.hpp"

namespace starvqa {

/// Directory of frame_00000.ppm, frame_00001.ppm, ... with no gaps.
class FrameStore {
 public:
  static FrameStore open(const std::filesystem::path& dir);
  static std::string frame_name(std::size_t index);

  const std::filesystem::path& directory() const { return dir_; }
  std::size_t frame_count() const { return count_; }
  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }

  /// Loads one frame; its size must match frame 0.
  Image load(std::size_t index) const;

 private:
  std::filesystem::path dir_;
  std::size_t count_ = 0;
  std::size_t height_ = 0;
  std::size_t width_ = 0;
};

/// Equal-interval sampling: index k = floor(k·N/F). Repeats frames when N < F.
std::vector<std::size_t> sample_frames(std::size_t frame_count, std::size_t count);

struct CropOffset {
  std::size_t row = 0;
  std::size_t col = 0;
  bool operator==(const CropOffset&) const = default;
};

/// Uniform over all valid offsets.
CropOffset random_crop_offset(std::size_t src_height, std::size_t src_width, std::size_t height, std::size_t width,
                              std::mt19937_64& rng);
/// Midpoint offsets, used for evaluation.
CropOffset center_crop_offset(std::size_t src_height, std::size_t src_width, std::size_t height, std::size_t width);

Image crop(const Image& frame, std::size_t height, std::size_t width, CropOffset offset);

/// Sampled source frames at full resolution, before cropping.
struct SampledVideo {
  std::string source_id;
  std::vector<std::size_t> frame_indices;
  std::vector<Image> frames;
};

SampledVideo load_sampled(const FrameStore& store, std::size_t frames, std::string source_id = {});

struct VideoClip {
  std::string source_id;
  std::vector<std::size_t> frame_indices;
  CropOffset offset;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<Image> frames;
};

/// Crops every frame with the same offset.
VideoClip make_clip(const SampledVideo& video, std::size_t height, std::size_t width, CropOffset offset);

/// Non-overlapping P×P patches. Row t·S + p of `data` holds patch p of
/// frame t; patches are numbered row-major over the grid and each is
/// flattened row-major with R,G,B interleaved per pixel, scaled by 1/255.
template <typename T>
struct PatchArray {
  std::size_t frames = 0;
  std::size_t patches = 0;  // S per frame
  std::size_t patch_size = 0;
  std::size_t grid_rows = 0;
  std::size_t grid_cols = 0;
  Tensor<T> data;  // (F·S) × 3P²
};

template <typename T>
PatchArray<T> patchify(const VideoClip& clip, std::size_t patch_size);

/// Inverse of patchify on the retained grid (⌊H/P⌋P × ⌊W/P⌋P frames).
template <typename T>
std::vector<Image> unpatchify(const PatchArray<T>& patches);

}  // namespace starvqa
