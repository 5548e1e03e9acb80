#include "starvqa/preprocess.hpp"

#include <cmath>
#include <cstdio>

#include "starvqa/errors.hpp"

namespace starvqa {

std::string FrameStore::frame_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%05zu.ppm", index);
  return buf;
}

FrameStore FrameStore::open(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw InputError("frame directory not found: " + dir.string());
  FrameStore store;
  store.dir_ = dir;
  while (std::filesystem::exists(dir / frame_name(store.count_))) ++store.count_;
  if (store.count_ == 0) throw InputError("no frames (expected frame_00000.ppm) in " + dir.string());
  const Image first = read_ppm(dir / frame_name(0));
  store.height_ = first.height;
  store.width_ = first.width;
  return store;
}

Image FrameStore::load(std::size_t index) const {
  if (index >= count_)
    throw InputError("frame " + std::to_string(index) + " out of range in " + dir_.string());
  Image img = read_ppm(dir_ / frame_name(index));
  if (img.height != height_ || img.width != width_)
    throw InputError(frame_name(index) + " is " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                     ", expected " + std::to_string(width_) + "x" + std::to_string(height_));
  return img;
}

std::vector<std::size_t> sample_frames(std::size_t frame_count, std::size_t count) {
  if (frame_count == 0) throw InputError("cannot sample frames from an empty video");
  if (count == 0) throw InputError("frame sample count must be at least 1");
  std::vector<std::size_t> idx(count);
  for (std::size_t k = 0; k < count; ++k) idx[k] = k * frame_count / count;
  return idx;
}

namespace {

void check_crop(std::size_t src_h, std::size_t src_w, std::size_t h, std::size_t w) {
  if (src_h < h || src_w < w)
    throw InputError("source " + std::to_string(src_w) + "x" + std::to_string(src_h) + " is smaller than crop " +
                     std::to_string(w) + "x" + std::to_string(h));
}

}  // namespace

CropOffset random_crop_offset(std::size_t src_h, std::size_t src_w, std::size_t h, std::size_t w,
                              std::mt19937_64& rng) {
  check_crop(src_h, src_w, h, w);
  std::uniform_int_distribution<std::size_t> rows(0, src_h - h);
  std::uniform_int_distribution<std::size_t> cols(0, src_w - w);
  CropOffset off;
  off.row = rows(rng);
  off.col = cols(rng);
  return off;
}

CropOffset center_crop_offset(std::size_t src_h, std::size_t src_w, std::size_t h, std::size_t w) {
  check_crop(src_h, src_w, h, w);
  return {(src_h - h) / 2, (src_w - w) / 2};
}

Image crop(const Image& frame, std::size_t height, std::size_t width, CropOffset offset) {
  check_crop(frame.height, frame.width, height, width);
  if (offset.row + height > frame.height || offset.col + width > frame.width)
    throw InputError("crop offset outside the source frame");
  Image out(height, width);
  for (std::size_t r = 0; r < height; ++r) {
    const auto* src = frame.pixels.data() + ((offset.row + r) * frame.width + offset.col) * 3;
    std::copy_n(src, width * 3, out.pixels.data() + r * width * 3);
  }
  return out;
}

SampledVideo load_sampled(const FrameStore& store, std::size_t frames, std::string source_id) {
  SampledVideo video;
  video.source_id = std::move(source_id);
  video.frame_indices = sample_frames(store.frame_count(), frames);
  video.frames.reserve(frames);
  for (std::size_t i : video.frame_indices) video.frames.push_back(store.load(i));
  return video;
}

VideoClip make_clip(const SampledVideo& video, std::size_t height, std::size_t width, CropOffset offset) {
  VideoClip clip;
  clip.source_id = video.source_id;
  clip.frame_indices = video.frame_indices;
  clip.offset = offset;
  clip.height = height;
  clip.width = width;
  clip.frames.reserve(video.frames.size());
  for (const auto& f : video.frames) clip.frames.push_back(crop(f, height, width, offset));
  return clip;
}

template <typename T>
PatchArray<T> patchify(const VideoClip& clip, std::size_t patch_size) {
  if (patch_size == 0) throw InputError("patch size must be at least 1");
  if (patch_size > std::min(clip.height, clip.width))
    throw InputError("patch size " + std::to_string(patch_size) + " exceeds frame " + std::to_string(clip.width) +
                     "x" + std::to_string(clip.height));
  PatchArray<T> out;
  out.frames = clip.frames.size();
  out.patch_size = patch_size;
  out.grid_rows = clip.height / patch_size;
  out.grid_cols = clip.width / patch_size;
  out.patches = out.grid_rows * out.grid_cols;
  const std::size_t len = 3 * patch_size * patch_size;
  out.data = Tensor<T>({out.frames * out.patches, len});
  const T scale = T{1} / T{255};
  for (std::size_t t = 0; t < out.frames; ++t) {
    const Image& f = clip.frames[t];
    if (f.height != clip.height || f.width != clip.width) throw InputError("clip frames differ in size");
    for (std::size_t gy = 0; gy < out.grid_rows; ++gy)
      for (std::size_t gx = 0; gx < out.grid_cols; ++gx) {
        T* dst = out.data.data() + (t * out.patches + gy * out.grid_cols + gx) * len;
        for (std::size_t y = 0; y < patch_size; ++y) {
          const auto* src = f.pixels.data() + ((gy * patch_size + y) * f.width + gx * patch_size) * 3;
          for (std::size_t i = 0; i < patch_size * 3; ++i) *dst++ = static_cast<T>(src[i]) * scale;
        }
      }
  }
  return out;
}

template <typename T>
std::vector<Image> unpatchify(const PatchArray<T>& patches) {
  const std::size_t p = patches.patch_size;
  const std::size_t len = 3 * p * p;
  std::vector<Image> frames;
  for (std::size_t t = 0; t < patches.frames; ++t) {
    Image img(patches.grid_rows * p, patches.grid_cols * p);
    for (std::size_t gy = 0; gy < patches.grid_rows; ++gy)
      for (std::size_t gx = 0; gx < patches.grid_cols; ++gx) {
        const T* src = patches.data.data() + (t * patches.patches + gy * patches.grid_cols + gx) * len;
        for (std::size_t y = 0; y < p; ++y) {
          auto* dst = img.pixels.data() + ((gy * p + y) * img.width + gx * p) * 3;
          for (std::size_t i = 0; i < p * 3; ++i) dst[i] = static_cast<std::uint8_t>(std::lround(*src++ * T{255}));
        }
      }
    frames.push_back(std::move(img));
  }
  return frames;
}

template PatchArray<float> patchify<float>(const VideoClip&, std::size_t);
template PatchArray<double> patchify<double>(const VideoClip&, std::size_t);
template std::vector<Image> unpatchify<float>(const PatchArray<float>&);
template std::vector<Image> unpatchify<double>(const PatchArray<double>&);

}  // namespace starvqa
