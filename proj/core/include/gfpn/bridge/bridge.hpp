#pragma once

#include <cstddef>
#include <vector>

#include "gfpn/numerics/init.hpp"
#include "gfpn/numerics/ops.hpp"
#include "gfpn/numerics/params.hpp"
#include "gfpn/segmentation/hierarchy.hpp"

namespace gfpn {

/// Exclusive ownership of the cells of an H_i x W_i feature grid by the
/// superpixels of one hierarchy level. Each cell goes to the superpixel
/// covering most of its pixels (ties: lower id). A superpixel that owns no
/// cell pools from every cell it overlaps instead; ownership is unchanged.
struct CellAssignment {
  std::size_t grid_height = 0;
  std::size_t grid_width = 0;
  std::size_t cell_size = 0;  // pixels per cell side
  std::vector<std::size_t> owner;                  // per cell
  std::vector<std::vector<std::size_t>> assigned;  // per superpixel, ascending
  std::vector<std::vector<std::size_t>> fallback;  // per superpixel; empty when assigned is not

  std::size_t cell_count() const { return owner.size(); }
  std::size_t superpixel_count() const { return assigned.size(); }
  const std::vector<std::size_t>& pooling_cells(std::size_t superpixel) const {
    return assigned[superpixel].empty() ? fallback[superpixel] : assigned[superpixel];
  }
};

/// Grid sides must divide the image sides with equal cell width and height.
CellAssignment assign_cells(const Partition& partition, std::size_t grid_height, std::size_t grid_width);

template <class T>
struct BridgeLevelParamsT {
  T projection;  // [D, 2 * C_i]: max || min pooled backbone features -> node feature
  T fuse;        // [D_p, 2 * D_p]: 1x1 convolution over [P^i || copied node features]

  template <class Self, class F>
  static void fields(Self& self, F&& f) {
    f("projection", self.projection);
    f("fuse", self.fuse);
  }
};
using BridgeLevelParams = BridgeLevelParamsT<Tensor>;
using BridgeLevelVars = BridgeLevelParamsT<Var>;

BridgeLevelParams init_bridge_level(std::size_t backbone_channels, std::size_t node_dim,
                                    std::size_t fpn_channels, Rng& rng);

/// h_k = ReLU(W2 [maxpool(C_k) || minpool(C_k)]) for every superpixel k of the
/// level. backbone is [C_i, H_i, W_i]; result [superpixels, D].
Var cnn_to_gnn(Var backbone, const CellAssignment& cells, const BridgeLevelVars& params);

/// Copies each superpixel's feature onto the cells it owns: [D, H_i, W_i].
Var copy_to_grid(Var node_features, const CellAssignment& cells);

/// 1x1 convolution of [P^i || copy_to_grid(nodes)], giving D_p channels again.
/// Throws ContractError when the node dimension differs from D_p.
Var gnn_to_cnn(Var node_features, const CellAssignment& cells, Var pyramid_level,
               const BridgeLevelVars& params);

}  // namespace gfpn
