#include "gfpn/pipeline/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <random>
#include <sstream>

#include "gfpn/errors.hpp"
#include "gfpn/numerics/init.hpp"

namespace gfpn {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

namespace {

using Color = std::array<double, 3>;
using Mask = std::vector<char>;

double color_distance(const Color& a, const Color& b) {
  double d = 0.0;
  for (std::size_t c = 0; c < 3; ++c) d += (a[c] - b[c]) * (a[c] - b[c]);
  return std::sqrt(d);
}

Color pick_color(Rng& rng, const std::vector<Color>& taken, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Color best{};
  double best_gap = -1.0;
  for (int attempt = 0; attempt < 200; ++attempt) {
    Color c{u(rng), u(rng), u(rng)};
    double gap = 1e9;
    for (const auto& t : taken) gap = std::min(gap, color_distance(c, t));
    if (gap >= 0.35) return c;
    if (gap > best_gap) {
      best_gap = gap;
      best = c;
    }
  }
  return best;
}

std::size_t mask_area(const Mask& m) { return static_cast<std::size_t>(std::count(m.begin(), m.end(), 1)); }

Mask rasterize(ShapeClass cls, std::size_t size, Rng& rng) {
  const double s = static_cast<double>(size);
  Mask mask(size * size, 0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto range = [&](double lo, double hi) { return lo + (std::max(hi, lo) - lo) * unit(rng); };

  switch (cls) {
    case kRectangle: {
      const double w = std::floor(range(8.0, s / 2.0));
      const double h = std::floor(range(8.0, s / 2.0));
      const double x0 = std::floor(range(0.0, s - w));
      const double y0 = std::floor(range(0.0, s - h));
      for (std::size_t y = 0; y < size; ++y)
        for (std::size_t x = 0; x < size; ++x)
          mask[y * size + x] = x >= x0 && x < x0 + w && y >= y0 && y < y0 + h;
      break;
    }
    case kDisk: {
      const double r = range(5.0, s / 4.0);
      const double cx = range(r, s - r);
      const double cy = range(r, s - r);
      for (std::size_t y = 0; y < size; ++y)
        for (std::size_t x = 0; x < size; ++x) {
          const double dx = x + 0.5 - cx;
          const double dy = y + 0.5 - cy;
          mask[y * size + x] = dx * dx + dy * dy <= r * r;
        }
      break;
    }
    case kTriangle: {
      const double r = range(8.0, s / 3.0);
      const double cx = range(r, s - r);
      const double cy = range(r, s - r);
      const double theta = range(0.0, 2.0 * std::numbers::pi);
      std::array<std::array<double, 2>, 3> v{};
      for (std::size_t k = 0; k < 3; ++k) {
        const double a = theta + 2.0 * std::numbers::pi * static_cast<double>(k) / 3.0;
        const double rk = r * range(0.8, 1.0);
        v[k] = {cx + rk * std::cos(a), cy + rk * std::sin(a)};
      }
      auto side = [](const std::array<double, 2>& p, const std::array<double, 2>& q, double x, double y) {
        return (q[0] - p[0]) * (y - p[1]) - (q[1] - p[1]) * (x - p[0]);
      };
      for (std::size_t y = 0; y < size; ++y)
        for (std::size_t x = 0; x < size; ++x) {
          const double px = x + 0.5;
          const double py = y + 0.5;
          const double d0 = side(v[0], v[1], px, py);
          const double d1 = side(v[1], v[2], px, py);
          const double d2 = side(v[2], v[0], px, py);
          const bool neg = d0 < 0 || d1 < 0 || d2 < 0;
          const bool pos = d0 > 0 || d1 > 0 || d2 > 0;
          mask[y * size + x] = !(neg && pos);
        }
      break;
    }
    case kBackground:
      break;
  }
  return mask;
}

SyntheticSample make_sample(Rng& rng, std::size_t size, std::size_t shape_classes) {
  std::uniform_int_distribution<std::size_t> count_dist(1, 3);
  std::uniform_int_distribution<std::size_t> class_dist(1, shape_classes);
  std::normal_distribution<double> noise(0.0, 0.05);

  // Dark background, brighter shapes with pairwise distinct colours.
  std::vector<Color> colors{pick_color(rng, {}, 0.0, 0.2)};
  std::vector<double> rgb(size * size * 3);
  for (std::size_t p = 0; p < size * size; ++p)
    for (std::size_t c = 0; c < 3; ++c) rgb[p * 3 + c] = colors[0][c];

  SyntheticSample sample;
  sample.pixel_labels.assign(size * size, kBackground);
  const std::size_t shapes = count_dist(rng);
  for (std::size_t i = 0; i < shapes; ++i) {
    const auto cls = static_cast<ShapeClass>(class_dist(rng));
    const Color color = pick_color(rng, colors, 0.35, 1.0);
    colors.push_back(color);
    Mask mask = rasterize(cls, size, rng);
    while (mask_area(mask) < 16) mask = rasterize(cls, size, rng);
    for (std::size_t p = 0; p < size * size; ++p) {
      if (!mask[p]) continue;
      sample.pixel_labels[p] = cls;
      for (std::size_t c = 0; c < 3; ++c) rgb[p * 3 + c] = color[c];
    }
    sample.shapes.push_back(cls);
  }
  for (auto& v : rgb) v += noise(rng);
  sample.image = Image(size, size, std::move(rgb));
  return sample;
}

}  // namespace

std::vector<SyntheticSample> gen_dataset(std::uint64_t seed, std::size_t count, std::size_t image_size,
                                         std::size_t shape_classes) {
  if (image_size < kMinImageSide) throw ContractError("gen_dataset: image_size below minimum");
  if (shape_classes < 1 || shape_classes > 3) throw ContractError("gen_dataset: 1-3 shape classes");
  std::vector<SyntheticSample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng(derive_seed(seed, i));
    out.push_back(make_sample(rng, image_size, shape_classes));
  }
  return out;
}

std::vector<std::size_t> region_majority_labels(const Partition& partition,
                                                const std::vector<std::size_t>& pixel_labels,
                                                std::size_t num_classes) {
  if (pixel_labels.size() != partition.labels().size()) {
    throw ContractError("region_majority_labels: label map size mismatch");
  }
  std::vector<std::size_t> out(partition.region_count());
  std::vector<std::size_t> counts(num_classes);
  for (std::size_t r = 0; r < partition.region_count(); ++r) {
    std::fill(counts.begin(), counts.end(), 0);
    for (auto p : partition.pixels(r)) {
      if (pixel_labels[p] >= num_classes) throw ContractError("pixel label out of range");
      ++counts[pixel_labels[p]];
    }
    out[r] = static_cast<std::size_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());
  }
  return out;
}

PreparedSample prepare_sample(const SyntheticSample& sample, std::size_t superpixels, bool with_graph,
                              std::size_t num_classes) {
  PreparedSample p;
  p.image = sample.image;
  p.pixel_labels = sample.pixel_labels;
  p.hierarchy = extract_hierarchy(build_merge_tree(sample.image), superpixels);
  const std::size_t h = sample.image.height();
  const std::size_t w = sample.image.width();
  for (std::size_t l = 0; l < kHierarchyLevels; ++l) {
    p.cells[l] = assign_cells(p.hierarchy.levels[l], h >> l, w >> l);
  }
  if (with_graph) p.graph = build_graph(p.hierarchy);
  p.region_labels = region_majority_labels(p.hierarchy.levels[0], sample.pixel_labels, num_classes);
  return p;
}

std::vector<PreparedSample> prepare_dataset(const std::vector<SyntheticSample>& samples,
                                            std::size_t superpixels, bool with_graph,
                                            std::size_t num_classes) {
  std::vector<PreparedSample> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(prepare_sample(s, superpixels, with_graph, num_classes));
  return out;
}

namespace fs = std::filesystem;

void write_dataset_dir(const std::string& dir, const std::vector<SyntheticSample>& samples) {
  fs::create_directories(dir);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    std::ostringstream stem;
    stem << "sample_" << std::setw(4) << std::setfill('0') << i;
    const fs::path base = fs::path(dir) / stem.str();
    write_ppm_file(base.string() + ".ppm", samples[i].image);
    std::ofstream labels(base.string() + ".pgm", std::ios::binary);
    if (!labels) throw FormatError("cannot write " + base.string() + ".pgm");
    write_pgm_labels(labels, samples[i].image.height(), samples[i].image.width(), samples[i].pixel_labels);
  }
}

std::vector<SyntheticSample> read_dataset_dir(const std::string& dir) {
  std::vector<fs::path> images;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() == ".ppm") images.push_back(entry.path());
  }
  std::sort(images.begin(), images.end());
  std::vector<SyntheticSample> out;
  for (const auto& img : images) {
    SyntheticSample s;
    s.image = read_ppm_file(img.string());
    fs::path label_path = img;
    label_path.replace_extension(".pgm");
    std::ifstream in(label_path, std::ios::binary);
    if (!in) throw FormatError("missing label map " + label_path.string());
    std::size_t h = 0;
    std::size_t w = 0;
    s.pixel_labels = read_pgm_labels(in, h, w);
    if (h != s.image.height() || w != s.image.width()) {
      throw FormatError("label map " + label_path.string() + " does not match its image");
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace gfpn
