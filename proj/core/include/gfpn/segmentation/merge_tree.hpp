#pragma once

#include <cstddef>
#include <vector>

#include "gfpn/segmentation/image.hpp"

namespace gfpn {

struct MergeRecord {
  std::size_t a = 0;       // lower region id
  std::size_t b = 0;       // higher region id
  std::size_t merged = 0;  // id of the union; N0 + step
  double cost = 0.0;
};

/// Complete greedy merge history. Regions 0..N0-1 are single pixels (row
/// major); the region created by merge t gets id N0 + t. After t merges the
/// partition has N0 - t regions.
struct MergeTree {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<MergeRecord> merges;

  std::size_t initial_regions() const { return height * width; }
};

struct MergeCostOptions {
  /// Weight of the mean boundary gradient term.
  double boundary_weight = 1.0;
};

/// Normalised Sobel gradient magnitude of the grey image (mean of RGB),
/// replicate border, divided by 4*sqrt(2) so values lie in [0, 1].
std::vector<double> sobel_magnitude(const Image& image);

/// Greedy agglomeration over the 4-connected region adjacency graph, from
/// single pixels to one region. At each step merges the adjacent pair with
/// the lowest cost
///
///   |mean_rgb(a) - mean_rgb(b)| / sqrt(3) + w * mean boundary gradient,
///
/// where the boundary gradient of a pixel edge (p, q) is the average of the
/// Sobel magnitudes at p and q. Ties go to the lowest (min id, max id) pair.
MergeTree build_merge_tree(const Image& image, const MergeCostOptions& options = {});

}  // namespace gfpn
