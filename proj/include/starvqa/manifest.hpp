#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "starvqa/quality_head.hpp"

namespace starvqa {

struct ManifestEntry {
  std::string video_id;
  std::filesystem::path frames_dir;  // resolved against the manifest's directory
  double raw_mos = 0.0;
  std::size_t line = 0;
};

/// Text manifest:
///   mos_lo,mos_hi
///   video_id,frames_dir,raw_mos
///   ...
struct Manifest {
  MosScale scale;
  std::vector<ManifestEntry> entries;

  static Manifest parse(std::string_view text, const std::filesystem::path& base_dir = {});
  static Manifest load(const std::filesystem::path& path);

  double scaled_mos(std::size_t i) const { return scale_mos(entries[i].raw_mos, scale); }
  std::string to_text() const;
};

}  // namespace starvqa
