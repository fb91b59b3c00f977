#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace gmrft {

/// Grayscale image with real-valued pixels; (row, col) indexing.
class Image {
 public:
  Image() = default;
  Image(int height, int width) : px_(Eigen::MatrixXd::Zero(height, width)) {}
  explicit Image(Eigen::MatrixXd px) : px_(std::move(px)) {}

  int height() const { return static_cast<int>(px_.rows()); }
  int width() const { return static_cast<int>(px_.cols()); }
  double& operator()(int r, int c) { return px_(r, c); }
  double operator()(int r, int c) const { return px_(r, c); }
  const Eigen::MatrixXd& pixels() const { return px_; }
  Eigen::MatrixXd& pixels() { return px_; }

 private:
  Eigen::MatrixXd px_;
};

/// Binary 8-bit PGM (P5, maxval 255). Throws ParseError on malformed input.
Image parse_pgm(std::string_view bytes);
/// Pixels are rounded to nearest and clamped into [0, 255].
std::string encode_pgm(const Image& image);

Image read_pgm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const Image& image);

/// Writes to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);
std::string read_file(const std::filesystem::path& path);

/// Sum of squared pixel differences; throws DimensionError on size mismatch.
double squared_error(const Image& a, const Image& b);

/// 10·log10(255²/MSE); +∞ when the images are identical.
double psnr(const Image& original, const Image& reconstructed);

}  // namespace gmrft
