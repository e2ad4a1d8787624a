#include "gfpn/bridge/bridge.hpp"

#include <algorithm>
#include <map>

#include "gfpn/errors.hpp"

namespace gfpn {

CellAssignment assign_cells(const Partition& partition, std::size_t grid_height, std::size_t grid_width) {
  const std::size_t h = partition.height();
  const std::size_t w = partition.width();
  if (grid_height == 0 || grid_width == 0 || h % grid_height || w % grid_width ||
      h / grid_height != w / grid_width) {
    throw ContractError("assign_cells: grid " + std::to_string(grid_height) + "x" +
                        std::to_string(grid_width) + " does not tile a " + std::to_string(h) + "x" +
                        std::to_string(w) + " image with square cells");
  }
  CellAssignment asg;
  asg.grid_height = grid_height;
  asg.grid_width = grid_width;
  asg.cell_size = h / grid_height;
  const std::size_t s = asg.cell_size;
  const std::size_t n = partition.region_count();
  asg.owner.assign(grid_height * grid_width, 0);
  asg.assigned.assign(n, {});
  asg.fallback.assign(n, {});
  std::vector<std::vector<std::size_t>> overlapping(n);

  std::map<std::size_t, std::size_t> counts;
  for (std::size_t gy = 0; gy < grid_height; ++gy) {
    for (std::size_t gx = 0; gx < grid_width; ++gx) {
      counts.clear();
      for (std::size_t y = gy * s; y < (gy + 1) * s; ++y)
        for (std::size_t x = gx * s; x < (gx + 1) * s; ++x) ++counts[partition.label(y, x)];
      const std::size_t cell = gy * grid_width + gx;
      std::size_t best = 0;
      std::size_t best_count = 0;
      // std::map iterates ids ascending, so strict > keeps the lower id on ties.
      for (const auto& [label, count] : counts) {
        overlapping[label].push_back(cell);
        if (count > best_count) {
          best = label;
          best_count = count;
        }
      }
      asg.owner[cell] = best;
      asg.assigned[best].push_back(cell);
    }
  }
  for (std::size_t k = 0; k < n; ++k) {
    if (asg.assigned[k].empty()) asg.fallback[k] = std::move(overlapping[k]);
  }
  return asg;
}

BridgeLevelParams init_bridge_level(std::size_t backbone_channels, std::size_t node_dim,
                                    std::size_t fpn_channels, Rng& rng) {
  BridgeLevelParams p;
  p.projection = xavier_uniform({node_dim, 2 * backbone_channels}, 2 * backbone_channels, node_dim, rng);
  // The fuse kernel starts as [I | 0]: the fused map begins as the plain FPN level and the graph
  // half is learned from zero, like beta in channel self-attention.
  std::vector<double> fuse(2 * fpn_channels * fpn_channels, 0.0);
  for (std::size_t r = 0; r < fpn_channels; ++r) fuse[r * 2 * fpn_channels + r] = 1.0;
  p.fuse = Tensor({fpn_channels, 2 * fpn_channels}, std::move(fuse), true);
  return p;
}

Var cnn_to_gnn(Var backbone, const CellAssignment& cells, const BridgeLevelVars& params) {
  const Shape& s = backbone.shape();
  if (s.size() != 3 || s[1] != cells.grid_height || s[2] != cells.grid_width) {
    throw DimensionError("cnn_to_gnn: feature map " + shape_string(s) + " does not match the " +
                         std::to_string(cells.grid_height) + "x" + std::to_string(cells.grid_width) +
                         " cell grid");
  }
  std::vector<std::size_t> rows;
  std::vector<std::size_t> offsets{0};
  for (std::size_t k = 0; k < cells.superpixel_count(); ++k) {
    const auto& pool = cells.pooling_cells(k);
    if (pool.empty()) throw ContractError("cnn_to_gnn: superpixel " + std::to_string(k) + " has no cells");
    rows.insert(rows.end(), pool.begin(), pool.end());
    offsets.push_back(rows.size());
  }
  const SegmentIndex groups = SegmentIndex::contiguous(std::move(offsets));
  Var pooled_cells = ops::gather_rows(ops::channels_to_rows(backbone), rows);
  Var mx = ops::segment_reduce(pooled_cells, groups, ops::Reduce::kMax);
  Var mn = ops::segment_reduce(pooled_cells, groups, ops::Reduce::kMin);
  return ops::relu(ops::linear(ops::concat(mx, mn), params.projection));
}

Var copy_to_grid(Var node_features, const CellAssignment& cells) {
  if (node_features.shape().size() != 2 || node_features.shape()[0] != cells.superpixel_count()) {
    throw DimensionError("copy_to_grid: node features " + shape_string(node_features.shape()) +
                         " for " + std::to_string(cells.superpixel_count()) + " superpixels");
  }
  return ops::rows_to_channels(ops::gather_rows(node_features, cells.owner), cells.grid_height,
                               cells.grid_width);
}

Var gnn_to_cnn(Var node_features, const CellAssignment& cells, Var pyramid_level,
               const BridgeLevelVars& params) {
  const Shape& ps = pyramid_level.shape();
  if (ps.size() != 3 || ps[1] != cells.grid_height || ps[2] != cells.grid_width) {
    throw DimensionError("gnn_to_cnn: pyramid level " + shape_string(ps) + " does not match the cell grid");
  }
  if (node_features.shape().size() != 2 || node_features.shape()[1] != ps[0]) {
    throw ContractError("gnn_to_cnn: node dimension " + shape_string(node_features.shape()) +
                        " must equal the pyramid channel count " + std::to_string(ps[0]));
  }
  Var copied = ops::channels_to_rows(copy_to_grid(node_features, cells));
  Var stacked = ops::concat(ops::channels_to_rows(pyramid_level), copied);
  return ops::rows_to_channels(ops::linear(stacked, params.fuse), cells.grid_height, cells.grid_width);
}

}  // namespace gfpn
