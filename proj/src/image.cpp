#include "gmrft/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "gmrft/error.hpp"

namespace gmrft {

namespace {

class HeaderReader {
 public:
  explicit HeaderReader(std::string_view bytes) : bytes_(bytes) {}

  std::string token() {
    skip_space_and_comments();
    const std::size_t start = pos_;
    while (pos_ < bytes_.size() && !std::isspace(static_cast<unsigned char>(bytes_[pos_]))) ++pos_;
    if (start == pos_) throw ParseError(line_, "truncated PGM header");
    return std::string(bytes_.substr(start, pos_ - start));
  }

  int number() {
    const std::string t = token();
    if (!std::all_of(t.begin(), t.end(), [](char ch) { return std::isdigit(static_cast<unsigned char>(ch)); }) ||
        t.size() > 9) {
      throw ParseError(line_, "expected a positive integer, got '" + t + "'");
    }
    return std::stoi(t);
  }

  // Exactly one whitespace byte separates the header from the raster.
  std::size_t raster_offset() {
    if (pos_ >= bytes_.size() || !std::isspace(static_cast<unsigned char>(bytes_[pos_]))) {
      throw ParseError(line_, "missing whitespace before raster");
    }
    return pos_ + 1;
  }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      const char ch = bytes_[pos_];
      if (ch == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(ch))) {
        if (ch == '\n') ++line_;
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
};

}  // namespace

Image parse_pgm(std::string_view bytes) {
  HeaderReader header(bytes);
  if (header.token() != "P5") throw ParseError(1, "not a binary PGM (magic P5)");
  const int width = header.number();
  const int height = header.number();
  const int maxval = header.number();
  if (width <= 0 || height <= 0) throw ParseError(0, "PGM dimensions must be positive");
  if (maxval != 255) throw ParseError(0, "only maxval 255 is supported");
  const std::size_t offset = header.raster_offset();
  const std::size_t needed = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  if (bytes.size() - offset < needed) throw ParseError(0, "truncated PGM raster");

  Image image(height, width);
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      image(r, c) = static_cast<unsigned char>(bytes[offset + static_cast<std::size_t>(r) * width + c]);
    }
  }
  return image;
}

std::string encode_pgm(const Image& image) {
  std::string out = "P5\n" + std::to_string(image.width()) + " " + std::to_string(image.height()) + "\n255\n";
  out.reserve(out.size() + static_cast<std::size_t>(image.width()) * image.height());
  for (int r = 0; r < image.height(); ++r) {
    for (int c = 0; c < image.width(); ++c) {
      const double v = std::clamp(std::nearbyint(image(r, c)), 0.0, 255.0);
      out.push_back(static_cast<char>(static_cast<unsigned char>(v)));
    }
  }
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Image read_pgm(const std::filesystem::path& path) { return parse_pgm(read_file(path)); }

void write_pgm(const std::filesystem::path& path, const Image& image) {
  write_file_atomic(path, encode_pgm(image));
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) {
      out.close();
      std::filesystem::remove(tmp);
      throw Error("write failed for " + tmp.string());
    }
  }
  std::filesystem::rename(tmp, path);
}

double squared_error(const Image& a, const Image& b) {
  if (a.height() != b.height() || a.width() != b.width()) {
    throw DimensionError("image sizes differ");
  }
  return (a.pixels() - b.pixels()).squaredNorm();
}

double psnr(const Image& original, const Image& reconstructed) {
  const double se = squared_error(original, reconstructed);
  if (se == 0.0) return std::numeric_limits<double>::infinity();
  const double mse = se / (static_cast<double>(original.height()) * original.width());
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

}  // namespace gmrft
