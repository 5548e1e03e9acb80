#include <gtest/gtest.h>

#include <map>

#include "starvqa/errors.hpp"
#include "starvqa/ppm.hpp"
#include "starvqa/preprocess.hpp"
#include "starvqa/synthetic.hpp"
#include "test_util.hpp"

using namespace starvqa;

namespace {

Image random_image(std::size_t h, std::size_t w, std::mt19937_64& rng) {
  Image img(h, w);
  std::uniform_int_distribution<int> byte(0, 255);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(byte(rng));
  return img;
}

std::vector<std::uint8_t> bytes_of(const std::string& s) { return {s.begin(), s.end()}; }

}  // namespace

TEST(Ppm, RoundTrip) {
  std::mt19937_64 rng(30);
  const auto img = random_image(5, 7, rng);
  EXPECT_EQ(parse_ppm(encode_ppm(img)), img);
}

TEST(Ppm, HeaderCommentsAccepted) {
  auto data = bytes_of("P6\n# made by hand\n2 1 # width height\n255\n");
  for (int i = 0; i < 6; ++i) data.push_back(static_cast<std::uint8_t>(i * 40));
  const auto img = parse_ppm(data);
  EXPECT_EQ(img.width, 2u);
  EXPECT_EQ(img.height, 1u);
  EXPECT_EQ(img.at(0, 1, 2), 200);
}

TEST(Ppm, RejectsOtherFormats) {
  EXPECT_THROW(parse_ppm(bytes_of("P3\n1 1\n255\n0 0 0\n")), InputError);
  EXPECT_THROW(parse_ppm(bytes_of("P6\n1 1\n65535\n123456")), InputError);
  EXPECT_THROW(parse_ppm(bytes_of("P6\n2 2\n255\n123")), InputError);
  EXPECT_THROW(parse_ppm(bytes_of("P6\n0 2\n255\n")), InputError);
  EXPECT_THROW(parse_ppm(bytes_of("P6 x")), InputError);
}

TEST(Ppm, FileRoundTrip) {
  const auto dir = svqa_test::scratch_dir("ppm");
  std::mt19937_64 rng(31);
  const auto img = random_image(3, 4, rng);
  write_ppm(dir / "a.ppm", img);
  EXPECT_EQ(read_ppm(dir / "a.ppm"), img);
  EXPECT_THROW(read_ppm(dir / "missing.ppm"), InputError);
}

TEST(SampleFrames, Examples) {
  EXPECT_EQ(sample_frames(8, 8), (std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6, 7}));
  EXPECT_EQ(sample_frames(16, 8), (std::vector<std::size_t>{0, 2, 4, 6, 8, 10, 12, 14}));
  EXPECT_EQ(sample_frames(3, 8), (std::vector<std::size_t>{0, 0, 0, 1, 1, 1, 2, 2}));
  EXPECT_THROW(sample_frames(0, 8), InputError);
}

TEST(SampleFrames, PropertyLengthAndRange) {
  std::mt19937_64 rng(32);
  std::uniform_int_distribution<std::size_t> d(1, 500);
  for (int i = 0; i < 1000; ++i) {
    const std::size_t n = d(rng), f = d(rng);
    const auto idx = sample_frames(n, f);
    ASSERT_EQ(idx.size(), f);
    EXPECT_TRUE(std::is_sorted(idx.begin(), idx.end()));
    EXPECT_LT(idx.back(), n);
  }
}

TEST(Crop, OnlyOffsetWhenSizesMatch) {
  std::mt19937_64 rng(33);
  const auto img = random_image(6, 9, rng);
  const auto off = random_crop_offset(6, 9, 6, 9, rng);
  EXPECT_EQ(off, (CropOffset{0, 0}));
  EXPECT_EQ(crop(img, 6, 9, off), img);
}

TEST(Crop, SameSeedSameOffsets) {
  std::mt19937_64 a(7), b(7);
  for (int i = 0; i < 20; ++i) EXPECT_EQ(random_crop_offset(300, 260, 224, 224, a), random_crop_offset(300, 260, 224, 224, b));
}

TEST(Crop, SourceSmallerThanCropIsInputError) {
  std::mt19937_64 rng(1);
  EXPECT_THROW(random_crop_offset(100, 300, 224, 224, rng), InputError);
  EXPECT_THROW(center_crop_offset(300, 100, 224, 224), InputError);
}

TEST(Crop, OffsetsUniformChiSquare) {
  std::mt19937_64 rng(2024);
  std::map<std::pair<std::size_t, std::size_t>, int> counts;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) {
    const auto o = random_crop_offset(226, 225, 224, 224, rng);
    ASSERT_LE(o.row, 2u);
    ASSERT_LE(o.col, 1u);
    ++counts[{o.row, o.col}];
  }
  ASSERT_EQ(counts.size(), 6u);
  const double expected = draws / 6.0;
  double chi2 = 0;
  for (const auto& [cell, c] : counts) chi2 += (c - expected) * (c - expected) / expected;
  // Upper 1% point of the chi-square distribution with 5 degrees of freedom.
  EXPECT_LT(chi2, 15.0863);
}

TEST(Crop, CenterOffset) {
  EXPECT_EQ(center_crop_offset(226, 225, 224, 224), (CropOffset{1, 0}));
  EXPECT_EQ(center_crop_offset(240, 320, 224, 224), (CropOffset{8, 48}));
}

TEST(Patchify, DefaultGeometry) {
  VideoClip clip;
  clip.height = clip.width = 224;
  clip.frames.assign(1, Image(224, 224, 0));
  const auto p = patchify<float>(clip, 16);
  EXPECT_EQ(p.patches, 196u);
  EXPECT_EQ(p.data.cols(), 768u);
}

TEST(Patchify, SmallGeometryAndFloor) {
  VideoClip clip;
  clip.height = clip.width = 8;
  clip.frames.assign(2, Image(8, 8, 0));
  EXPECT_EQ(patchify<float>(clip, 4).patches, 4u);
  clip.height = 10;
  clip.width = 11;
  clip.frames.assign(1, Image(10, 11, 0));
  const auto p = patchify<float>(clip, 4);
  EXPECT_EQ(p.grid_rows, 2u);
  EXPECT_EQ(p.grid_cols, 2u);
  EXPECT_THROW(patchify<float>(clip, 12), InputError);
}

TEST(Patchify, ConstantGrayFrame) {
  VideoClip clip;
  clip.height = clip.width = 8;
  clip.frames.assign(2, Image(8, 8, 128));
  const auto p = patchify<double>(clip, 4);
  for (double v : p.data.values()) EXPECT_EQ(v, 128.0 / 255.0);
}

TEST(Patchify, LayoutIsRowMajorInterleaved) {
  VideoClip clip;
  clip.height = 4;
  clip.width = 4;
  Image img(4, 4);
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 4; ++c)
      for (std::size_t ch = 0; ch < 3; ++ch) img.at(r, c, ch) = static_cast<std::uint8_t>(r * 40 + c * 10 + ch);
  clip.frames = {img};
  const auto p = patchify<double>(clip, 2);
  // Patch 1 is the top-right 2×2 block; its second pixel is (0, 3).
  EXPECT_EQ(p.data.at(1, 3 + 0), 30.0 / 255.0);
  EXPECT_EQ(p.data.at(1, 3 + 2), 32.0 / 255.0);
  // Patch 2 is bottom-left; its third pixel is (3, 0).
  EXPECT_EQ(p.data.at(2, 6 + 1), 121.0 / 255.0);
}

TEST(Patchify, PropertyRoundTrip) {
  std::mt19937_64 rng(34);
  std::uniform_int_distribution<std::size_t> d(1, 13);
  for (int trial = 0; trial < 50; ++trial) {
    VideoClip clip;
    clip.height = d(rng) + 3;
    clip.width = d(rng) + 3;
    const std::size_t patch = std::min<std::size_t>(d(rng) % 4 + 1, std::min(clip.height, clip.width));
    for (std::size_t f = 0; f < 3; ++f) clip.frames.push_back(random_image(clip.height, clip.width, rng));
    const auto p = patchify<float>(clip, patch);
    EXPECT_EQ(p.data.cols(), 3 * patch * patch);
    const auto back = unpatchify(p);
    ASSERT_EQ(back.size(), 3u);
    for (std::size_t f = 0; f < 3; ++f)
      EXPECT_EQ(back[f], crop(clip.frames[f], p.grid_rows * patch, p.grid_cols * patch, CropOffset{0, 0}));
  }
}

TEST(FrameStore, OpensDenseDirectory) {
  const auto dir = svqa_test::scratch_dir("store");
  std::mt19937_64 rng(35);
  for (std::size_t i = 0; i < 5; ++i) write_ppm(dir / FrameStore::frame_name(i), random_image(6, 8, rng));
  const auto store = FrameStore::open(dir);
  EXPECT_EQ(store.frame_count(), 5u);
  EXPECT_EQ(store.height(), 6u);
  EXPECT_EQ(store.width(), 8u);
  const auto video = load_sampled(store, 8);
  EXPECT_EQ(video.frame_indices, sample_frames(5, 8));
  EXPECT_EQ(video.frames[7], store.load(4));
}

TEST(FrameStore, Errors) {
  const auto dir = svqa_test::scratch_dir("store_err");
  EXPECT_THROW(FrameStore::open(dir / "nope"), InputError);
  EXPECT_THROW(FrameStore::open(dir), InputError);
  std::mt19937_64 rng(36);
  write_ppm(dir / FrameStore::frame_name(0), random_image(6, 8, rng));
  write_ppm(dir / FrameStore::frame_name(1), random_image(7, 8, rng));
  const auto store = FrameStore::open(dir);
  EXPECT_THROW(store.load(1), InputError);
}

TEST(MakeClip, SharedOffsetAcrossFrames) {
  std::mt19937_64 rng(37);
  SampledVideo video;
  for (int i = 0; i < 3; ++i) video.frames.push_back(random_image(10, 12, rng));
  video.frame_indices = {0, 1, 2};
  const auto clip = make_clip(video, 8, 8, CropOffset{1, 3});
  for (std::size_t f = 0; f < 3; ++f) {
    EXPECT_EQ(clip.frames[f], crop(video.frames[f], 8, 8, CropOffset{1, 3}));
    EXPECT_EQ(clip.frames[f].at(0, 0, 1), video.frames[f].at(1, 3, 1));
  }
}

TEST(Synthetic, FramesParseAndManifestIsValid) {
  const auto dir = svqa_test::scratch_dir("synth");
  SyntheticSpec spec;
  spec.frames = 3;
  const auto manifest = make_synthetic(spec, dir);
  ASSERT_EQ(manifest.entries.size(), 8u);
  for (std::size_t c = 0; c < 8; ++c) {
    EXPECT_EQ(manifest.entries[c].raw_mos, 100.0 - 12.5 * static_cast<double>(c));
    if (c) EXPECT_LT(manifest.scaled_mos(c), manifest.scaled_mos(c - 1));
    const auto store = FrameStore::open(manifest.entries[c].frames_dir);
    EXPECT_EQ(store.frame_count(), 3u);
    const auto img = store.load(0);
    EXPECT_EQ(parse_ppm(encode_ppm(img)), img);
  }
  // Level 0 is the undegraded render.
  EXPECT_EQ(read_ppm(dir / "clip_00" / FrameStore::frame_name(1)), render_frame(spec, 0, 1));
  // Re-running writes the same bytes.
  const auto again = svqa_test::scratch_dir("synth2");
  make_synthetic(spec, again);
  EXPECT_EQ(read_ppm(again / "clip_05" / FrameStore::frame_name(2)), read_ppm(dir / "clip_05" / FrameStore::frame_name(2)));
}
