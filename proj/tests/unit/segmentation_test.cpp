#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "gfpn/errors.hpp"
#include "gfpn/numerics/init.hpp"
#include "gfpn/segmentation/hierarchy.hpp"
#include "gfpn/segmentation/merge_tree.hpp"
#include "oracles.hpp"

namespace gfpn {
namespace {

Image random_image(std::size_t h, std::size_t w, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> rgb(h * w * 3);
  for (auto& v : rgb) v = u(rng);
  return Image(h, w, std::move(rgb));
}

// Two flat halves with a little texture so the merge order is not all ties.
Image blocky_image(std::size_t size, Rng& rng) {
  std::normal_distribution<double> noise(0.0, 0.03);
  std::vector<double> rgb(size * size * 3);
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x)
      for (std::size_t c = 0; c < 3; ++c)
        rgb[(y * size + x) * 3 + c] = (x < size / 2 ? 0.2 : 0.7) + 0.1 * c + noise(rng);
  return Image(size, size, std::move(rgb));
}

bool four_connected(const Partition& p, std::size_t region) {
  const auto& px = p.pixels(region);
  std::set<std::size_t> members(px.begin(), px.end());
  std::set<std::size_t> seen{px.front()};
  std::vector<std::size_t> stack{px.front()};
  const std::size_t w = p.width();
  while (!stack.empty()) {
    const std::size_t q = stack.back();
    stack.pop_back();
    const std::size_t y = q / w, x = q % w;
    std::vector<std::size_t> next;
    if (y > 0) next.push_back(q - w);
    if (y + 1 < p.height()) next.push_back(q + w);
    if (x > 0) next.push_back(q - 1);
    if (x + 1 < w) next.push_back(q + 1);
    for (auto n : next)
      if (members.count(n) && seen.insert(n).second) stack.push_back(n);
  }
  return seen.size() == members.size();
}

TEST(Image, ClampsAndValidates) {
  const Image img(1, 2, {-0.5, 0.5, 2.0, 0.1, 0.2, 0.3});
  EXPECT_EQ(img.at(0, 0, 0), 0.0);
  EXPECT_EQ(img.at(0, 0, 2), 1.0);
  EXPECT_THROW(Image(2, 2, std::vector<double>(5)), ContractError);
  EXPECT_THROW(Image(0, 2, {}), ContractError);
}

TEST(Image, PpmRoundTripAtEightBitPrecision) {
  Rng rng(5);
  const Image img = random_image(9, 11, rng);
  std::stringstream ss;
  write_ppm(ss, img);
  const Image back = read_ppm(ss);
  ASSERT_EQ(back.height(), 9u);
  ASSERT_EQ(back.width(), 11u);
  for (std::size_t i = 0; i < img.rgb().size(); ++i) EXPECT_NEAR(back.rgb()[i], img.rgb()[i], 0.5 / 255 + 1e-12);
  std::stringstream again;
  write_ppm(again, back);
  std::stringstream first;
  write_ppm(first, img);
  EXPECT_EQ(again.str(), first.str());
}

TEST(Image, PpmRejectsMalformedAndTinyInput) {
  std::stringstream bad("P3\n2 2\n255\n");
  EXPECT_THROW(read_ppm(bad), FormatError);
  std::stringstream truncated("P6\n8 8\n255\nabc");
  EXPECT_THROW(read_ppm(truncated), FormatError);
  // Well-formed, but below the minimum image side.
  std::stringstream tiny("P6\n4 4\n255\n" + std::string(48, '\0'));
  EXPECT_THROW(read_ppm(tiny), ContractError);
}

TEST(MergeTree, UniformSquareMergesAtZeroCost) {
  const MergeTree tree = build_merge_tree(Image(2, 2, std::vector<double>(12, 0.4)));
  ASSERT_EQ(tree.merges.size(), 3u);
  for (const auto& m : tree.merges) EXPECT_EQ(m.cost, 0.0);
  EXPECT_EQ(partition_after(tree, 3).region_count(), 1u);
}

TEST(MergeTree, BlackWhitePairCostByHand) {
  // Colour term: |(1,1,1)| / sqrt(3) = 1. The grey step 0 -> 1 gives a Sobel
  // x-response of 4 at both pixels (replicated border), normalised by
  // 4 sqrt(2), so the boundary term is 1 / sqrt(2).
  const MergeTree tree = build_merge_tree(Image(1, 2, {0, 0, 0, 1, 1, 1}));
  ASSERT_EQ(tree.merges.size(), 1u);
  EXPECT_EQ(tree.merges[0].a, 0u);
  EXPECT_EQ(tree.merges[0].b, 1u);
  EXPECT_EQ(tree.merges[0].merged, 2u);
  EXPECT_NEAR(tree.merges[0].cost, 1.0 + 1.0 / std::sqrt(2.0), 1e-12);
}

TEST(MergeTree, EndsInOneRegionAndIsDeterministic) {
  Rng rng(11);
  const Image img = random_image(12, 10, rng);
  const MergeTree a = build_merge_tree(img);
  const MergeTree b = build_merge_tree(img);
  ASSERT_EQ(a.merges.size(), 119u);
  for (std::size_t t = 0; t < a.merges.size(); ++t) {
    EXPECT_EQ(a.merges[t].a, b.merges[t].a);
    EXPECT_EQ(a.merges[t].b, b.merges[t].b);
    EXPECT_EQ(a.merges[t].cost, b.merges[t].cost);
    EXPECT_EQ(a.merges[t].merged, 120 + t);
    EXPECT_LT(a.merges[t].a, a.merges[t].b);
  }
  EXPECT_EQ(partition_after(a, 119).region_count(), 1u);
}

TEST(MergeTree, ReplayedRegionCountsAndConnectivity) {
  Rng rng(2);
  const Image img = blocky_image(16, rng);
  const MergeTree tree = build_merge_tree(img);
  for (std::size_t t : {0u, 1u, 17u, 100u, 200u, 250u, 255u}) {
    const Partition p = partition_after(tree, t);
    ASSERT_EQ(p.region_count(), 256 - t);
    for (std::size_t r = 0; r < p.region_count(); ++r) EXPECT_TRUE(four_connected(p, r)) << t << " " << r;
  }
}

TEST(MergeTree, MergedRegionsAreAdjacent) {
  Rng rng(8);
  const Image img = random_image(10, 10, rng);
  const MergeTree tree = build_merge_tree(img);
  Partition p = partition_after(tree, 0);
  // Track region ids through the replay.
  std::vector<std::size_t> id_of_pixel(100);
  for (std::size_t i = 0; i < 100; ++i) id_of_pixel[i] = i;
  for (const auto& m : tree.merges) {
    bool touching = false;
    for (std::size_t y = 0; y < 10 && !touching; ++y)
      for (std::size_t x = 0; x < 10 && !touching; ++x) {
        const std::size_t here = id_of_pixel[y * 10 + x];
        if (here != m.a) continue;
        if (x + 1 < 10 && id_of_pixel[y * 10 + x + 1] == m.b) touching = true;
        if (x > 0 && id_of_pixel[y * 10 + x - 1] == m.b) touching = true;
        if (y + 1 < 10 && id_of_pixel[(y + 1) * 10 + x] == m.b) touching = true;
        if (y > 0 && id_of_pixel[(y - 1) * 10 + x] == m.b) touching = true;
      }
    ASSERT_TRUE(touching) << "merge " << m.merged;
    for (auto& id : id_of_pixel)
      if (id == m.a || id == m.b) id = m.merged;
  }
}

TEST(Hierarchy, LevelCountsFollowCeilRule) {
  EXPECT_EQ(level_counts(256), (std::array<std::size_t, 5>{256, 64, 16, 4, 1}));
  EXPECT_EQ(level_counts(100), (std::array<std::size_t, 5>{100, 25, 7, 2, 1}));
  EXPECT_EQ(level_counts(1), (std::array<std::size_t, 5>{1, 1, 1, 1, 1}));
}

TEST(Hierarchy, ExtractedLevelsNestAndMatchCounts) {
  Rng rng(4);
  const Image img = blocky_image(32, rng);
  const MergeTree tree = build_merge_tree(img);
  for (std::size_t n : {256u, 100u, 37u}) {
    const SuperpixelHierarchy h = extract_hierarchy(tree, n);
    const auto counts = level_counts(n);
    for (std::size_t l = 0; l < kHierarchyLevels; ++l) {
      ASSERT_EQ(h.levels[l].region_count(), counts[l]);
      std::vector<std::size_t> seen(counts[l], 0);
      for (auto lab : h.levels[l].labels()) ++seen[lab];
      for (auto s : seen) EXPECT_GT(s, 0u);
    }
    for (std::size_t l = 0; l + 1 < kHierarchyLevels; ++l) {
      for (std::size_t p = 0; p < img.pixel_count(); ++p) {
        EXPECT_EQ(h.parents[l][h.levels[l].labels()[p]], h.levels[l + 1].labels()[p]);
      }
    }
  }
}

TEST(Hierarchy, SingleRegionLevelsHaveIdentityParents) {
  Rng rng(1);
  const SuperpixelHierarchy h = extract_hierarchy(build_merge_tree(random_image(8, 8, rng)), 1);
  for (std::size_t l = 0; l < kHierarchyLevels; ++l) {
    EXPECT_EQ(h.levels[l].region_count(), 1u);
    EXPECT_TRUE(h.neighbors[l][0].empty());
  }
  for (const auto& p : h.parents) EXPECT_EQ(p, std::vector<std::size_t>{0});
}

TEST(Hierarchy, RejectsOutOfRangeCount) {
  Rng rng(1);
  const MergeTree tree = build_merge_tree(random_image(8, 8, rng));
  EXPECT_THROW(extract_hierarchy(tree, 0), ContractError);
  EXPECT_THROW(extract_hierarchy(tree, 65), ContractError);
  EXPECT_NO_THROW(extract_hierarchy(tree, 64));
}

TEST(Hierarchy, JsonRoundTrip) {
  Rng rng(6);
  const SuperpixelHierarchy h = extract_hierarchy(build_merge_tree(blocky_image(16, rng)), 40);
  const std::string text = hierarchy_to_json(h);
  const SuperpixelHierarchy back = hierarchy_from_json(text);
  for (std::size_t l = 0; l < kHierarchyLevels; ++l) EXPECT_TRUE(back.levels[l] == h.levels[l]);
  EXPECT_EQ(back.parents, h.parents);
  EXPECT_EQ(hierarchy_to_json(back), text);
  EXPECT_THROW(hierarchy_from_json("{\"height\": 2}"), FormatError);
}

TEST(Hierarchy, NonNestedLevelsAreRejected) {
  const Partition halves(2, 2, {0, 1, 0, 1});
  const Partition rows(2, 2, {0, 0, 1, 1});
  const Partition one(2, 2, {0, 0, 0, 0});
  EXPECT_THROW(hierarchy_from_levels({halves, rows, one, one, one}), ContractError);
  EXPECT_NO_THROW(hierarchy_from_levels({halves, one, one, one, one}));
}

TEST(Adjacency, VerticalHalves) {
  const Partition p(4, 4, {0, 0, 1, 1, 0, 0, 1, 1, 0, 0, 1, 1, 0, 0, 1, 1});
  const auto n = adjacency(p);
  EXPECT_EQ(n[0], std::vector<std::size_t>{1});
  EXPECT_EQ(n[1], std::vector<std::size_t>{0});
}

TEST(Adjacency, SingleRegionHasNoNeighbours) {
  const auto n = adjacency(Partition(3, 3, std::vector<std::size_t>(9, 0)));
  ASSERT_EQ(n.size(), 1u);
  EXPECT_TRUE(n[0].empty());
}

TEST(Adjacency, DiagonalContactIsNotAdjacency) {
  const auto n = adjacency(Partition(2, 2, {0, 1, 2, 0}));
  // Region 0 is not connected, but the pixel edges still define adjacency.
  EXPECT_EQ(n[1], (std::vector<std::size_t>{0}));
  EXPECT_EQ(n[2], (std::vector<std::size_t>{0}));
}

TEST(Adjacency, MatchesPixelPairScanOnRandomPartitions) {
  Rng rng(0);
  for (int trial = 0; trial < 20; ++trial) {
    const auto labels = oracle::random_partition(16, 16, 5 + trial * 3, rng);
    const Partition p(16, 16, labels);
    const auto got = adjacency(p);
    const auto want = oracle::adjacency(16, 16, labels, p.region_count());
    ASSERT_EQ(got.size(), want.size());
    for (std::size_t r = 0; r < got.size(); ++r) {
      EXPECT_EQ(std::set<std::size_t>(got[r].begin(), got[r].end()), want[r]);
      EXPECT_TRUE(std::is_sorted(got[r].begin(), got[r].end()));
    }
  }
}

TEST(Partition, RejectsSparseLabels) {
  EXPECT_THROW(Partition(1, 2, {0, 2}), ContractError);
  const Partition d = Partition::densified(1, 3, {7, 3, 7});
  EXPECT_EQ(d.labels(), (std::vector<std::size_t>{0, 1, 0}));
}

}  // namespace
}  // namespace gfpn
