#include "gfpn/segmentation/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

#include "gfpn/errors.hpp"

namespace gfpn {

Image::Image(std::size_t height, std::size_t width, std::vector<double> rgb)
    : height_(height), width_(width), rgb_(std::move(rgb)) {
  if (height_ == 0 || width_ == 0) throw ContractError("image must have positive size");
  if (rgb_.size() != height_ * width_ * 3) {
    throw ContractError("image buffer holds " + std::to_string(rgb_.size()) + " values, expected " +
                        std::to_string(height_ * width_ * 3));
  }
  for (auto& v : rgb_) {
    if (!std::isfinite(v)) throw ContractError("image contains a non-finite value");
    v = std::clamp(v, 0.0, 1.0);
  }
}

namespace {

// Reads the next header token, skipping whitespace and '#' comments.
std::string header_token(std::istream& in) {
  std::string tok;
  char c;
  while (in.get(c)) {
    if (c == '#') {
      std::string ignored;
      std::getline(in, ignored);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(c);
  }
  return tok;
}

std::size_t header_number(std::istream& in, const char* what) {
  const std::string tok = header_token(in);
  if (tok.empty() || !std::all_of(tok.begin(), tok.end(), ::isdigit)) {
    throw FormatError(std::string("netpbm header: bad ") + what + " '" + tok + "'");
  }
  return std::stoul(tok);
}

void read_header(std::istream& in, const char* magic, std::size_t& height, std::size_t& width) {
  if (header_token(in) != magic) throw FormatError(std::string("expected netpbm magic ") + magic);
  width = header_number(in, "width");
  height = header_number(in, "height");
  if (header_number(in, "maxval") != 255) throw FormatError("only maxval 255 is supported");
}

}  // namespace

Image read_ppm(std::istream& in) {
  std::size_t h = 0;
  std::size_t w = 0;
  read_header(in, "P6", h, w);
  if (h < kMinImageSide || w < kMinImageSide) {
    throw ContractError("image is " + std::to_string(h) + "x" + std::to_string(w) +
                        ", sides must be at least " + std::to_string(kMinImageSide));
  }
  std::vector<unsigned char> bytes(h * w * 3);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (static_cast<std::size_t>(in.gcount()) != bytes.size()) throw FormatError("truncated PPM data");
  std::vector<double> rgb(bytes.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) rgb[i] = bytes[i] / 255.0;
  return Image(h, w, std::move(rgb));
}

Image read_ppm_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  return read_ppm(in);
}

void write_ppm(std::ostream& out, const Image& image) {
  out << "P6\n" << image.width() << ' ' << image.height() << "\n255\n";
  std::vector<unsigned char> bytes(image.rgb().size());
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    bytes[i] = static_cast<unsigned char>(std::lround(image.rgb()[i] * 255.0));
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void write_ppm_file(const std::string& path, const Image& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path);
  write_ppm(out, image);
}

std::vector<std::size_t> read_pgm_labels(std::istream& in, std::size_t& height, std::size_t& width) {
  read_header(in, "P5", height, width);
  std::vector<unsigned char> bytes(height * width);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (static_cast<std::size_t>(in.gcount()) != bytes.size()) throw FormatError("truncated PGM data");
  return {bytes.begin(), bytes.end()};
}

void write_pgm_labels(std::ostream& out, std::size_t height, std::size_t width,
                      const std::vector<std::size_t>& labels) {
  if (labels.size() != height * width) throw ContractError("label map size mismatch");
  out << "P5\n" << width << ' ' << height << "\n255\n";
  for (auto l : labels) {
    if (l > 255) throw ContractError("label does not fit in 8 bits");
    out.put(static_cast<char>(l));
  }
}

}  // namespace gfpn
