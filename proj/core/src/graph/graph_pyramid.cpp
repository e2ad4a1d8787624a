#include "gfpn/graph/graph_pyramid.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>

#include "gfpn/errors.hpp"
#include "json.hpp"

namespace gfpn {
namespace {
std::atomic<std::size_t> g_builds{0};
}  // namespace

std::size_t graph_build_count() { return g_builds.load(); }
void reset_graph_build_count() { g_builds.store(0); }

std::size_t GraphPyramid::level_of(std::size_t node) const {
  for (std::size_t l = kHierarchyLevels; l-- > 0;) {
    if (node >= level_offset[l]) return l;
  }
  return 0;
}

GraphPyramid build_graph(const SuperpixelHierarchy& hierarchy) {
  ++g_builds;
  GraphPyramid g;
  std::size_t offset = 0;
  for (std::size_t l = 0; l < kHierarchyLevels; ++l) {
    g.level_offset[l] = offset;
    g.level_size[l] = hierarchy.levels[l].region_count();
    offset += g.level_size[l];
  }

  for (std::size_t l = 0; l < kHierarchyLevels; ++l) {
    const auto& nbrs = hierarchy.neighbors[l];
    for (std::size_t r = 0; r < nbrs.size(); ++r) {
      for (auto s : nbrs[r]) {
        if (r < s) g.contextual.emplace_back(g.level_offset[l] + r, g.level_offset[l] + s);
      }
    }
  }

  for (std::size_t l = 0; l + 1 < kHierarchyLevels; ++l) {
    for (std::size_t r = 0; r < g.level_size[l]; ++r) {
      std::size_t region = r;
      for (std::size_t up = l + 1; up < kHierarchyLevels; ++up) {
        region = hierarchy.parents[up - 1][region];
        g.hierarchical.push_back(
            HierarchicalEdge{g.level_offset[l] + r, g.level_offset[up] + region, 0.0, true});
      }
    }
  }
  return g;
}

double cosine_similarity(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) {
    throw DimensionError("cosine_similarity: dimensions " + std::to_string(u.size()) + " and " +
                         std::to_string(v.size()));
  }
  double dot = 0.0;
  double nu = 0.0;
  double nv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  nu = std::sqrt(nu);
  nv = std::sqrt(nv);
  if (nu < 1e-12 || nv < 1e-12) return 0.0;
  return dot / (nu * nv);
}

GraphPyramid prune_hierarchical(GraphPyramid graph, const Tensor& features, PruneRule rule) {
  const std::size_t n = graph.node_count();
  if (features.rank() != 2 || features.dim(0) != n) {
    throw DimensionError("prune_hierarchical: features " + shape_string(features.shape()) +
                         " for " + std::to_string(n) + " nodes");
  }
  const std::size_t d = features.dim(1);
  auto row = [&](std::size_t i) { return features.data().subspan(i * d, d); };

  std::vector<std::vector<std::size_t>> incident(n);
  for (std::size_t e = 0; e < graph.hierarchical.size(); ++e) {
    auto& edge = graph.hierarchical[e];
    edge.similarity = cosine_similarity(row(edge.descendant), row(edge.ancestor));
    incident[edge.descendant].push_back(e);
    incident[edge.ancestor].push_back(e);
  }

  std::vector<int> votes(graph.hierarchical.size(), 0);
  for (std::size_t i = 0; i < n; ++i) {
    auto& list = incident[i];
    auto peer = [&](std::size_t e) {
      const auto& edge = graph.hierarchical[e];
      return edge.descendant == i ? edge.ancestor : edge.descendant;
    };
    std::sort(list.begin(), list.end(), [&](std::size_t x, std::size_t y) {
      const double sx = graph.hierarchical[x].similarity;
      const double sy = graph.hierarchical[y].similarity;
      if (sx != sy) return sx > sy;
      return peer(x) < peer(y);
    });
    const std::size_t keep = (list.size() + 1) / 2;
    for (std::size_t k = 0; k < keep; ++k) ++votes[list[k]];
  }
  for (std::size_t e = 0; e < graph.hierarchical.size(); ++e) {
    graph.hierarchical[e].kept = rule == PruneRule::kUnion ? votes[e] >= 1 : votes[e] == 2;
  }
  graph.pruned = true;
  return graph;
}

std::vector<std::pair<std::size_t, std::size_t>> contextual_edges(const GraphPyramid& graph) {
  return graph.contextual;
}

std::vector<std::pair<std::size_t, std::size_t>> surviving_hierarchical_edges(const GraphPyramid& graph) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (const auto& e : graph.hierarchical) {
    if (e.kept) out.emplace_back(e.descendant, e.ancestor);
  }
  return out;
}

std::string graph_to_json(const GraphPyramid& graph) {
  nlohmann::json j;
  std::vector<std::size_t> levels(graph.node_count());
  for (std::size_t l = 0; l < kHierarchyLevels; ++l)
    for (std::size_t i = 0; i < graph.level_size[l]; ++i) levels[graph.level_offset[l] + i] = l + 1;
  j["node_count"] = graph.node_count();
  j["node_levels"] = levels;
  j["level_sizes"] = graph.level_size;
  j["contextual_edges"] = graph.contextual;
  j["pruned"] = graph.pruned;
  auto& h = j["hierarchical_edges"] = nlohmann::json::array();
  for (const auto& e : graph.hierarchical) {
    h.push_back({{"descendant", e.descendant},
                 {"ancestor", e.ancestor},
                 {"kept", e.kept},
                 {"similarity", e.similarity}});
  }
  return j.dump();
}

}  // namespace gfpn
