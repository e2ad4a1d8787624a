#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gfpn/bridge/bridge.hpp"
#include "gfpn/graph/graph_pyramid.hpp"
#include "gfpn/segmentation/hierarchy.hpp"

namespace gfpn {

enum ShapeClass : std::size_t { kBackground = 0, kRectangle = 1, kDisk = 2, kTriangle = 3 };

struct SyntheticSample {
  Image image;
  std::vector<std::size_t> pixel_labels;  // row-major, 0 = background
  std::vector<std::size_t> shapes;        // classes drawn, in paint order
};

/// Seed for an independent stream derived from a base seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// 1-3 filled shapes per image in colours well separated from the background
/// and from each other, plus Gaussian noise (sigma 0.05) clamped to [0, 1].
/// Each shape covers at least 16 pixels. Deterministic in the seed.
std::vector<SyntheticSample> gen_dataset(std::uint64_t seed, std::size_t count, std::size_t image_size = 64,
                                         std::size_t shape_classes = 3);

/// Majority pixel label of every region (ties to the lower class).
std::vector<std::size_t> region_majority_labels(const Partition& partition,
                                                const std::vector<std::size_t>& pixel_labels,
                                                std::size_t num_classes);

/// Everything about a sample that does not depend on learned parameters.
struct PreparedSample {
  Image image;
  std::vector<std::size_t> pixel_labels;
  SuperpixelHierarchy hierarchy;
  std::array<CellAssignment, kHierarchyLevels> cells;
  std::optional<GraphPyramid> graph;     // only built when the GraphFPN branch is used
  std::vector<std::size_t> region_labels;  // level-1 superpixel labels
};

PreparedSample prepare_sample(const SyntheticSample& sample, std::size_t superpixels, bool with_graph,
                              std::size_t num_classes = 4);
std::vector<PreparedSample> prepare_dataset(const std::vector<SyntheticSample>& samples,
                                            std::size_t superpixels, bool with_graph,
                                            std::size_t num_classes = 4);

/// sample_NNNN.ppm + sample_NNNN.pgm (pixel labels) per sample.
void write_dataset_dir(const std::string& dir, const std::vector<SyntheticSample>& samples);
std::vector<SyntheticSample> read_dataset_dir(const std::string& dir);

}  // namespace gfpn
