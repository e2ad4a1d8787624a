#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

namespace gfpn {

/// RGB image with f64 channels in [0, 1], interleaved row-major.
class Image {
 public:
  Image() = default;
  /// Values are clamped to [0, 1]. Throws ContractError for empty sizes or a
  /// buffer length other than height * width * 3.
  Image(std::size_t height, std::size_t width, std::vector<double> rgb);

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t pixel_count() const { return height_ * width_; }
  double at(std::size_t y, std::size_t x, std::size_t channel) const {
    return rgb_[(y * width_ + x) * 3 + channel];
  }
  const std::vector<double>& rgb() const { return rgb_; }

  bool operator==(const Image&) const = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<double> rgb_;
};

/// Smallest side accepted by the file loaders and the full pipeline.
inline constexpr std::size_t kMinImageSide = 8;

/// Binary PPM (P6, maxval 255); samples are divided by 255.
Image read_ppm(std::istream& in);
Image read_ppm_file(const std::string& path);
/// Rounds to the nearest 8-bit level.
void write_ppm(std::ostream& out, const Image& image);
void write_ppm_file(const std::string& path, const Image& image);

/// Binary PGM (P5, maxval 255) holding one small integer per pixel; used for
/// label maps next to dataset images.
std::vector<std::size_t> read_pgm_labels(std::istream& in, std::size_t& height, std::size_t& width);
void write_pgm_labels(std::ostream& out, std::size_t height, std::size_t width,
                      const std::vector<std::size_t>& labels);

}  // namespace gfpn
