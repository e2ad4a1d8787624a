#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "gfpn/numerics/tensor.hpp"
#include "gfpn/segmentation/hierarchy.hpp"

namespace gfpn {

enum class PruneRule {
  kUnion,         // an edge survives if either endpoint ranks it in its top half
  kIntersection,  // an edge survives only if both endpoints do
};

struct HierarchicalEdge {
  std::size_t descendant = 0;  // global node id, finer level
  std::size_t ancestor = 0;    // global node id, coarser level
  double similarity = 0.0;     // cosine similarity, set by prune_hierarchical
  bool kept = true;
};

/// Nodes are numbered level by level: level 0 (finest) first.
struct GraphPyramid {
  std::array<std::size_t, kHierarchyLevels> level_offset{};
  std::array<std::size_t, kHierarchyLevels> level_size{};
  /// Undirected pairs (u < v) between adjacent superpixels of one level.
  std::vector<std::pair<std::size_t, std::size_t>> contextual;
  /// One entry per ancestor-descendant pair, sorted by (descendant, ancestor).
  std::vector<HierarchicalEdge> hierarchical;
  bool pruned = false;

  std::size_t node_count() const { return level_offset.back() + level_size.back(); }
  std::size_t level_of(std::size_t node) const;
};

/// Contextual edges from per-level adjacency, hierarchical edges between
/// every node and all of its ancestors.
GraphPyramid build_graph(const SuperpixelHierarchy& hierarchy);

/// Number of build_graph calls in this process, for instrumentation.
std::size_t graph_build_count();
void reset_graph_build_count();

/// u.v / (|u||v|); 0 when either norm is below 1e-12.
double cosine_similarity(std::span<const double> u, std::span<const double> v);

/// Ranks each node's hierarchical edges by cosine similarity of the node
/// features (descending, ties to the lower peer id) and keeps the top
/// ceil(m/2) per node. `features` is [node_count, D].
GraphPyramid prune_hierarchical(GraphPyramid graph, const Tensor& features,
                                PruneRule rule = PruneRule::kUnion);

/// Undirected edge lists the GNN layers run on.
std::vector<std::pair<std::size_t, std::size_t>> contextual_edges(const GraphPyramid& graph);
std::vector<std::pair<std::size_t, std::size_t>> surviving_hierarchical_edges(const GraphPyramid& graph);

/// JSON dump: node levels, edge lists, prune flags and similarities.
std::string graph_to_json(const GraphPyramid& graph);

}  // namespace gfpn
