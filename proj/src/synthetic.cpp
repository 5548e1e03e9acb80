#include "starvqa/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>

#include "starvqa/errors.hpp"
#include "starvqa/preprocess.hpp"

namespace starvqa {

namespace {

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

std::vector<double> gaussian_kernel(double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3 * sigma)));
  std::vector<double> k(2 * radius + 1);
  double sum = 0;
  for (int i = -radius; i <= radius; ++i) sum += k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (auto& v : k) v /= sum;
  return k;
}

}  // namespace

double synthetic_mos(const SyntheticSpec& spec, std::size_t level) {
  return 100.0 - static_cast<double>(level) * 100.0 / static_cast<double>(spec.clips);
}

Image render_frame(const SyntheticSpec& spec, std::size_t clip, std::size_t index) {
  using std::numbers::pi;
  Image img(spec.height, spec.width);
  const double c = static_cast<double>(clip), t = static_cast<double>(index);
  const double fx = 1.0 + std::fmod(c * 0.37, 1.5), fy = 0.5 + std::fmod(c * 0.61, 1.5);
  const double angle = c * 0.7;
  const double base[3] = {0.5 + 0.4 * std::sin(c), 0.5 + 0.4 * std::sin(c + 2.1), 0.5 + 0.4 * std::sin(c + 4.2)};
  for (std::size_t r = 0; r < spec.height; ++r)
    for (std::size_t col = 0; col < spec.width; ++col) {
      const double x = static_cast<double>(col) / static_cast<double>(spec.width);
      const double y = static_cast<double>(r) / static_cast<double>(spec.height);
      const double u = std::cos(angle) * x + std::sin(angle) * y;
      const double v = -std::sin(angle) * x + std::cos(angle) * y;
      const double wave = std::sin(2 * pi * (fx * u + 0.05 * t)) * std::cos(2 * pi * fy * v + 0.3 * c);
      const bool check = ((r / 4 + col / 4 + clip) % 2) == 0;
      for (std::size_t ch = 0; ch < 3; ++ch) {
        const double val = base[ch] + 0.3 * wave * (ch == clip % 3 ? 1.0 : 0.5) + (check ? 0.08 : -0.08);
        img.at(r, col, ch) = to_byte(255.0 * val);
      }
    }
  return img;
}

Image gaussian_blur(const Image& image, double sigma) {
  if (sigma <= 0) return image;
  const auto k = gaussian_kernel(sigma);
  const int radius = static_cast<int>(k.size() / 2);
  const int h = static_cast<int>(image.height), w = static_cast<int>(image.width);
  std::vector<double> tmp(image.pixels.size());
  auto clampi = [](int v, int hi) { return std::clamp(v, 0, hi - 1); };
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      for (int ch = 0; ch < 3; ++ch) {
        double s = 0;
        for (int i = -radius; i <= radius; ++i) s += k[i + radius] * image.at(r, clampi(c + i, w), ch);
        tmp[(r * w + c) * 3 + ch] = s;
      }
  Image out(image.height, image.width);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      for (int ch = 0; ch < 3; ++ch) {
        double s = 0;
        for (int i = -radius; i <= radius; ++i) s += k[i + radius] * tmp[(clampi(r + i, h) * w + c) * 3 + ch];
        out.at(r, c, ch) = to_byte(s);
      }
  return out;
}

Image add_noise(const Image& image, double sigma, std::uint64_t seed) {
  if (sigma <= 0) return image;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, sigma);
  Image out = image;
  for (auto& p : out.pixels) p = to_byte(p + noise(rng));
  return out;
}

Manifest make_synthetic(const SyntheticSpec& spec, const std::filesystem::path& dir) {
  if (spec.clips == 0 || spec.frames == 0 || spec.height == 0 || spec.width == 0)
    throw ConfigError("synthetic set needs at least one clip, frame and pixel");
  std::filesystem::create_directories(dir);
  std::string manifest = "0,100\n";
  for (std::size_t c = 0; c < spec.clips; ++c) {
    char name[32];
    std::snprintf(name, sizeof name, "clip_%02zu", c);
    const auto clip_dir = dir / name;
    std::filesystem::create_directories(clip_dir);
    const double level = static_cast<double>(c);
    for (std::size_t f = 0; f < spec.frames; ++f) {
      auto img = gaussian_blur(render_frame(spec, c, f), level * spec.blur_step);
      img = add_noise(img, level * spec.noise_step, spec.seed * 1000003 + c * 1009 + f);
      write_ppm(clip_dir / FrameStore::frame_name(f), img);
    }
    char mos[64];
    std::snprintf(mos, sizeof mos, "%.17g", synthetic_mos(spec, c));
    manifest += std::string(name) + "," + name + "," + mos + "\n";
  }
  const auto path = dir / "manifest.csv";
  std::ofstream(path) << manifest;
  return Manifest::load(path);
}

}  // namespace starvqa
