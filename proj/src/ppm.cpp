#include "starvqa/ppm.hpp"

#include <cctype>
#include <fstream>
#include <iterator>
#include <string>

#include "starvqa/errors.hpp"

namespace starvqa {

namespace {

class HeaderReader {
 public:
  explicit HeaderReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t number() {
    skip_space();
    std::size_t value = 0;
    std::size_t digits = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      value = value * 10 + (bytes_[pos_++] - '0');
      if (++digits > 9) throw InputError("PPM header number too large");
    }
    if (digits == 0) throw InputError("malformed PPM header");
    return value;
  }

  void skip_space() {
    while (pos_ < bytes_.size()) {
      if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  // Exactly one whitespace byte separates maxval from the raster.
  void single_space() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) throw InputError("malformed PPM header");
    ++pos_;
  }

  std::size_t pos() const { return pos_; }
  void advance(std::size_t n) { pos_ += n; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

Image parse_ppm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') throw InputError("not a binary PPM (P6) file");
  HeaderReader reader(bytes);
  reader.advance(2);
  const std::size_t width = reader.number();
  const std::size_t height = reader.number();
  const std::size_t maxval = reader.number();
  if (maxval != 255) throw InputError("unsupported PPM maxval " + std::to_string(maxval) + " (need 255)");
  if (width == 0 || height == 0) throw InputError("PPM with zero dimension");
  reader.single_space();
  const std::size_t need = width * height * 3;
  if (bytes.size() - reader.pos() < need) throw InputError("truncated PPM raster");
  Image image(height, width);
  std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(reader.pos()), need, image.pixels.begin());
  return image;
}

std::vector<std::uint8_t> encode_ppm(const Image& image) {
  const std::string header =
      "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), image.pixels.begin(), image.pixels.end());
  return out;
}

Image read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open frame file " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return parse_ppm(bytes);
  } catch (const InputError& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

void write_ppm(const std::filesystem::path& path, const Image& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  const auto bytes = encode_ppm(image);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace starvqa
