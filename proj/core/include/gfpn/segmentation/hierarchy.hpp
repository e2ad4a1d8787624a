#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "gfpn/segmentation/merge_tree.hpp"

namespace gfpn {

using NeighborSets = std::vector<std::vector<std::size_t>>;

/// Image partition: a dense region label per pixel plus per-region pixel
/// lists (row-major, ascending).
class Partition {
 public:
  Partition() = default;
  /// Labels must be dense in [0, count); throws ContractError otherwise.
  Partition(std::size_t height, std::size_t width, std::vector<std::size_t> labels);
  /// Relabels by first appearance in row-major order.
  static Partition densified(std::size_t height, std::size_t width,
                             const std::vector<std::size_t>& raw_labels);

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t region_count() const { return regions_.size(); }
  std::size_t label(std::size_t y, std::size_t x) const { return labels_[y * width_ + x]; }
  const std::vector<std::size_t>& labels() const { return labels_; }
  const std::vector<std::size_t>& pixels(std::size_t region) const { return regions_[region]; }

  bool operator==(const Partition& other) const { return labels_ == other.labels_ && height_ == other.height_; }

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<std::size_t> labels_;
  std::vector<std::vector<std::size_t>> regions_;
};

/// Regions are neighbours iff they share at least one 4-connected pixel
/// edge. Sets are sorted, symmetric and irreflexive.
NeighborSets adjacency(const Partition& partition);

/// Partition after the first `steps` merges of the tree.
Partition partition_after(const MergeTree& tree, std::size_t steps);

inline constexpr std::size_t kHierarchyLevels = 5;

/// Region count at each level: ceil(n / 4^i).
std::array<std::size_t, kHierarchyLevels> level_counts(std::size_t finest);

/// Five nested partitions, finest first. parents[i][r] is the level i+1
/// region containing region r of level i.
struct SuperpixelHierarchy {
  std::array<Partition, kHierarchyLevels> levels;
  std::array<std::vector<std::size_t>, kHierarchyLevels - 1> parents;
  std::array<NeighborSets, kHierarchyLevels> neighbors;

  std::size_t height() const { return levels[0].height(); }
  std::size_t width() const { return levels[0].width(); }
};

/// Picks the partitions with N, ceil(N/4), ..., ceil(N/256) regions from the
/// merge tree. Throws ContractError unless 1 <= N <= pixel count.
SuperpixelHierarchy extract_hierarchy(const MergeTree& tree, std::size_t finest);

/// Assembles a hierarchy from given levels, deriving parent maps and
/// adjacency. Throws ContractError if the levels are not nested.
SuperpixelHierarchy hierarchy_from_levels(std::array<Partition, kHierarchyLevels> levels);

/// {height, width, levels: [{count, labels}], parents: [[...]]}
std::string hierarchy_to_json(const SuperpixelHierarchy& hierarchy);
SuperpixelHierarchy hierarchy_from_json(std::string_view text);

}  // namespace gfpn
