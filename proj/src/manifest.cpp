#include "starvqa/manifest.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "starvqa/errors.hpp"

namespace starvqa {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

[[noreturn]] void fail(std::size_t line, const std::string& msg) {
  throw InputError("manifest line " + std::to_string(line) + ": " + msg);
}

double to_double(std::string_view s, std::size_t line) {
  double v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size())
    fail(line, "'" + std::string(s) + "' is not a number");
  return v;
}

}  // namespace

Manifest Manifest::parse(std::string_view text, const std::filesystem::path& base_dir) {
  Manifest m;
  bool have_header = false;
  std::unordered_set<std::string> seen;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    const std::string_view line = trim(text.substr(0, nl));
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_csv(line);
    if (!have_header) {
      if (fields.size() != 2) fail(line_no, "expected header 'mos_lo,mos_hi'");
      m.scale = {to_double(fields[0], line_no), to_double(fields[1], line_no)};
      if (!(m.scale.lo < m.scale.hi)) fail(line_no, "mos_lo must be below mos_hi");
      have_header = true;
      continue;
    }
    if (fields.size() != 3) fail(line_no, "expected 'video_id,frames_dir,raw_mos'");
    if (fields[0].empty() || fields[1].empty()) fail(line_no, "empty video id or frames directory");
    ManifestEntry e;
    e.video_id = std::string(fields[0]);
    e.frames_dir = std::filesystem::path(std::string(fields[1]));
    if (e.frames_dir.is_relative() && !base_dir.empty()) e.frames_dir = base_dir / e.frames_dir;
    e.raw_mos = to_double(fields[2], line_no);
    e.line = line_no;
    if (!(e.raw_mos >= m.scale.lo && e.raw_mos <= m.scale.hi)) {
      std::ostringstream msg;
      msg << "MOS " << e.raw_mos << " outside [" << m.scale.lo << ", " << m.scale.hi << "]";
      fail(line_no, msg.str());
    }
    if (!seen.insert(e.video_id).second) fail(line_no, "duplicate video id '" + e.video_id + "'");
    m.entries.push_back(std::move(e));
  }
  if (!have_header) throw InputError("manifest is empty");
  return m;
}

Manifest Manifest::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read manifest " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.parent_path());
}

std::string Manifest::to_text() const {
  std::ostringstream out;
  out.precision(17);
  out << scale.lo << "," << scale.hi << "\n";
  for (const auto& e : entries) out << e.video_id << "," << e.frames_dir.string() << "," << e.raw_mos << "\n";
  return out.str();
}

}  // namespace starvqa
