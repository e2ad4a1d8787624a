#include "gfpn/segmentation/hierarchy.hpp"

#include <algorithm>
#include <numeric>

#include "gfpn/errors.hpp"
#include "json.hpp"

namespace gfpn {

Partition::Partition(std::size_t height, std::size_t width, std::vector<std::size_t> labels)
    : height_(height), width_(width), labels_(std::move(labels)) {
  if (labels_.size() != height_ * width_) {
    throw ContractError("partition: " + std::to_string(labels_.size()) + " labels for a " +
                        std::to_string(height_) + "x" + std::to_string(width_) + " image");
  }
  std::size_t count = 0;
  for (auto l : labels_) count = std::max(count, l + 1);
  regions_.assign(count, {});
  for (std::size_t p = 0; p < labels_.size(); ++p) regions_[labels_[p]].push_back(p);
  for (std::size_t r = 0; r < count; ++r) {
    if (regions_[r].empty()) {
      throw ContractError("partition: labels are not dense, region " + std::to_string(r) +
                          " has no pixels");
    }
  }
}

Partition Partition::densified(std::size_t height, std::size_t width,
                               const std::vector<std::size_t>& raw_labels) {
  std::vector<std::size_t> dense(raw_labels.size());
  std::vector<std::size_t> map;
  std::size_t bound = 0;
  for (auto l : raw_labels) bound = std::max(bound, l + 1);
  map.assign(bound, static_cast<std::size_t>(-1));
  std::size_t next = 0;
  for (std::size_t p = 0; p < raw_labels.size(); ++p) {
    auto& slot = map[raw_labels[p]];
    if (slot == static_cast<std::size_t>(-1)) slot = next++;
    dense[p] = slot;
  }
  return Partition(height, width, std::move(dense));
}

NeighborSets adjacency(const Partition& partition) {
  const std::size_t h = partition.height();
  const std::size_t w = partition.width();
  NeighborSets sets(partition.region_count());
  auto link = [&](std::size_t a, std::size_t b) {
    if (a == b) return;
    sets[a].push_back(b);
    sets[b].push_back(a);
  };
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t l = partition.label(y, x);
      if (x + 1 < w) link(l, partition.label(y, x + 1));
      if (y + 1 < h) link(l, partition.label(y + 1, x));
    }
  }
  for (auto& s : sets) {
    std::sort(s.begin(), s.end());
    s.erase(std::unique(s.begin(), s.end()), s.end());
  }
  return sets;
}

namespace {

class UnionReplay {
 public:
  explicit UnionReplay(const MergeTree& tree)
      : tree_(tree), parent_(2 * tree.initial_regions()) {
    std::iota(parent_.begin(), parent_.end(), std::size_t{0});
  }

  void apply(std::size_t step) {
    const auto& m = tree_.merges[step];
    parent_[m.a] = m.merged;
    parent_[m.b] = m.merged;
  }

  std::size_t find(std::size_t x) {
    std::size_t root = x;
    while (parent_[root] != root) root = parent_[root];
    while (parent_[x] != root) {
      const std::size_t next = parent_[x];
      parent_[x] = root;
      x = next;
    }
    return root;
  }

  Partition snapshot() {
    const std::size_t n = tree_.initial_regions();
    std::vector<std::size_t> raw(n);
    for (std::size_t p = 0; p < n; ++p) raw[p] = find(p);
    return Partition::densified(tree_.height, tree_.width, raw);
  }

 private:
  const MergeTree& tree_;
  std::vector<std::size_t> parent_;
};

}  // namespace

Partition partition_after(const MergeTree& tree, std::size_t steps) {
  if (steps > tree.merges.size()) {
    throw ContractError("partition_after: tree has only " + std::to_string(tree.merges.size()) +
                        " merges");
  }
  UnionReplay replay(tree);
  for (std::size_t t = 0; t < steps; ++t) replay.apply(t);
  return replay.snapshot();
}

std::array<std::size_t, kHierarchyLevels> level_counts(std::size_t finest) {
  std::array<std::size_t, kHierarchyLevels> counts{};
  std::size_t divisor = 1;
  for (auto& c : counts) {
    c = (finest + divisor - 1) / divisor;
    divisor *= 4;
  }
  return counts;
}

SuperpixelHierarchy hierarchy_from_levels(std::array<Partition, kHierarchyLevels> levels) {
  SuperpixelHierarchy h;
  h.levels = std::move(levels);
  for (std::size_t i = 0; i < kHierarchyLevels; ++i) {
    if (h.levels[i].height() != h.levels[0].height() || h.levels[i].width() != h.levels[0].width()) {
      throw ContractError("hierarchy: levels have different image sizes");
    }
    h.neighbors[i] = adjacency(h.levels[i]);
  }
  for (std::size_t i = 0; i + 1 < kHierarchyLevels; ++i) {
    const Partition& fine = h.levels[i];
    const Partition& coarse = h.levels[i + 1];
    auto& parent = h.parents[i];
    parent.assign(fine.region_count(), 0);
    for (std::size_t r = 0; r < fine.region_count(); ++r) {
      const auto& px = fine.pixels(r);
      const std::size_t p = coarse.labels()[px.front()];
      for (auto q : px) {
        if (coarse.labels()[q] != p) {
          throw ContractError("hierarchy: region " + std::to_string(r) + " of level " +
                              std::to_string(i + 1) + " straddles two parents");
        }
      }
      parent[r] = p;
    }
  }
  return h;
}

SuperpixelHierarchy extract_hierarchy(const MergeTree& tree, std::size_t finest) {
  const std::size_t n0 = tree.initial_regions();
  if (finest < 1 || finest > n0) {
    throw ContractError("extract_hierarchy: N=" + std::to_string(finest) + " outside [1, " +
                        std::to_string(n0) + "]");
  }
  if (tree.merges.size() + 1 != n0) throw ContractError("extract_hierarchy: incomplete merge tree");
  const auto counts = level_counts(finest);

  std::array<Partition, kHierarchyLevels> levels;
  UnionReplay replay(tree);
  std::size_t step = 0;
  for (std::size_t i = 0; i < kHierarchyLevels; ++i) {
    const std::size_t target_steps = n0 - counts[i];
    while (step < target_steps) replay.apply(step++);
    levels[i] = replay.snapshot();
  }
  return hierarchy_from_levels(std::move(levels));
}

std::string hierarchy_to_json(const SuperpixelHierarchy& hierarchy) {
  nlohmann::json j;
  j["height"] = hierarchy.height();
  j["width"] = hierarchy.width();
  j["levels"] = nlohmann::json::array();
  for (const auto& level : hierarchy.levels) {
    j["levels"].push_back({{"count", level.region_count()}, {"labels", level.labels()}});
  }
  j["parents"] = hierarchy.parents;
  return j.dump();
}

SuperpixelHierarchy hierarchy_from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
    const std::size_t h = j.at("height").get<std::size_t>();
    const std::size_t w = j.at("width").get<std::size_t>();
    const auto& lv = j.at("levels");
    if (!lv.is_array() || lv.size() != kHierarchyLevels) {
      throw FormatError("hierarchy JSON: expected 5 levels");
    }
    std::array<Partition, kHierarchyLevels> levels;
    for (std::size_t i = 0; i < kHierarchyLevels; ++i) {
      levels[i] = Partition(h, w, lv[i].at("labels").get<std::vector<std::size_t>>());
      if (levels[i].region_count() != lv[i].at("count").get<std::size_t>()) {
        throw FormatError("hierarchy JSON: count does not match labels at level " +
                          std::to_string(i + 1));
      }
    }
    auto result = hierarchy_from_levels(std::move(levels));
    if (j.contains("parents")) {
      const auto parents = j.at("parents").get<std::vector<std::vector<std::size_t>>>();
      for (std::size_t i = 0; i < parents.size() && i < result.parents.size(); ++i) {
        if (parents[i] != result.parents[i]) {
          throw FormatError("hierarchy JSON: parent map of level " + std::to_string(i + 1) +
                            " disagrees with labels");
        }
      }
    }
    return result;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("hierarchy JSON: ") + e.what());
  }
}

}  // namespace gfpn
