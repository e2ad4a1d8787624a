#include <gtest/gtest.h>

#include "gfpn/bridge/bridge.hpp"
#include "gfpn/errors.hpp"
#include "gfpn/numerics/grad_check.hpp"
#include "oracles.hpp"

namespace gfpn {
namespace {

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

// [rows, 2 * rows] block matrix; `left` selects [I | 0], otherwise [0 | I].
Tensor half_identity(std::size_t rows, bool left) {
  std::vector<double> d(rows * 2 * rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r) d[r * 2 * rows + (left ? r : rows + r)] = 1.0;
  return Tensor({rows, 2 * rows}, d);
}

TEST(AssignCells, FallbackForSuperpixelWithoutCells) {
  std::vector<std::size_t> labels(16, 0);
  labels[15] = 1;
  const auto a = assign_cells(Partition(4, 4, labels), 2, 2);
  EXPECT_EQ(a.cell_size, 2u);
  EXPECT_EQ(a.owner, (std::vector<std::size_t>{0, 0, 0, 0}));
  EXPECT_EQ(a.assigned[0], (std::vector<std::size_t>{0, 1, 2, 3}));
  EXPECT_TRUE(a.assigned[1].empty());
  EXPECT_EQ(a.fallback[1], std::vector<std::size_t>{3});
  EXPECT_TRUE(a.fallback[0].empty());
  EXPECT_EQ(a.pooling_cells(1), std::vector<std::size_t>{3});
}

TEST(AssignCells, SingleRegionOwnsEverything) {
  const auto a = assign_cells(Partition(8, 8, std::vector<std::size_t>(64, 0)), 4, 4);
  EXPECT_EQ(a.assigned[0].size(), 16u);
  for (auto o : a.owner) EXPECT_EQ(o, 0u);
}

TEST(AssignCells, TieGoesToLowerId) {
  // Cell split evenly between regions 1 (left) and 0 (right).
  const auto a = assign_cells(Partition(2, 2, {1, 0, 1, 0}), 1, 1);
  EXPECT_EQ(a.owner, std::vector<std::size_t>{0});
}

TEST(AssignCells, GridMustDivideImage) {
  EXPECT_THROW(assign_cells(Partition(4, 4, std::vector<std::size_t>(16, 0)), 3, 3), ContractError);
  EXPECT_THROW(assign_cells(Partition(4, 8, std::vector<std::size_t>(32, 0)), 2, 2), ContractError);
}

TEST(AssignCells, MatchesOverlapCountOracle) {
  Rng rng(0);
  for (int trial = 0; trial < 20; ++trial) {
    const auto labels = oracle::random_partition(32, 32, 10 + 7 * trial, rng);
    const Partition p(32, 32, labels);
    for (std::size_t g : {32u, 16u, 8u, 4u, 2u}) {
      const auto a = assign_cells(p, g, g);
      ASSERT_EQ(a.owner, oracle::cell_owners(32, 32, labels, g, g)) << trial << " grid " << g;
      std::vector<std::size_t> count(g * g, 0);
      for (std::size_t s = 0; s < a.superpixel_count(); ++s) {
        for (auto c : a.assigned[s]) {
          ++count[c];
          EXPECT_EQ(a.owner[c], s);
        }
        EXPECT_FALSE(a.pooling_cells(s).empty());
      }
      for (auto c : count) EXPECT_EQ(c, 1u);
    }
  }
}

TEST(CnnToGnn, MaxMinPoolingByHand) {
  // Superpixel 0 owns cells 0 and 1 of a 1x2 grid with features (1,2), (3,0).
  const auto a = assign_cells(Partition(1, 2, {0, 0}), 1, 2);
  Tape tape;
  Var c = tape.constant(Tensor({2, 1, 2}, {1, 3, 2, 0}));
  const BridgeLevelVars p{tape.constant(half_identity(2, true)), tape.constant(Tensor::zeros({2, 4}))};
  EXPECT_EQ(values(cnn_to_gnn(c, a, p).value()), (std::vector<double>{3, 2}));
  const BridgeLevelVars q{tape.constant(half_identity(2, false)), p.fuse};
  EXPECT_EQ(values(cnn_to_gnn(c, a, q).value()), (std::vector<double>{1, 0}));
}

TEST(CnnToGnn, SingleCellDuplicatesFeature) {
  const auto a = assign_cells(Partition(1, 2, {0, 1}), 1, 2);
  Tape tape;
  Var c = tape.constant(Tensor({2, 1, 2}, {1, 3, 2, 0}));
  const BridgeLevelVars p{tape.constant(Tensor::matrix({{1, 0, 1, 0}, {0, 1, 0, 1}})), tape.constant(Tensor::zeros({2, 4}))};
  EXPECT_EQ(values(cnn_to_gnn(c, a, p).value()), (std::vector<double>{2, 4, 6, 0}));
}

TEST(CnnToGnn, FallbackPoolsOverlappedCell) {
  std::vector<std::size_t> labels(16, 0);
  labels[15] = 1;
  const auto a = assign_cells(Partition(4, 4, labels), 2, 2);
  Tape tape;
  Var c = tape.constant(Tensor({1, 2, 2}, {1, 2, 3, 4}));
  const BridgeLevelVars p{tape.constant(Tensor::matrix({{1, 0}})), tape.constant(Tensor::zeros({1, 2}))};
  EXPECT_EQ(values(cnn_to_gnn(c, a, p).value()), (std::vector<double>{4, 4}));
}

TEST(CopyToGrid, ReadsBackOwnerFeature) {
  Rng rng(3);
  const auto labels = oracle::random_partition(16, 16, 30, rng);
  const auto a = assign_cells(Partition(16, 16, labels), 8, 8);
  const Tensor nodes = uniform({a.superpixel_count(), 3}, -1, 1, rng);
  Tape tape;
  const Tensor grid = copy_to_grid(tape.constant(nodes), a).value();
  ASSERT_EQ(grid.shape(), (Shape{3, 8, 8}));
  for (std::size_t cell = 0; cell < 64; ++cell)
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(grid[c * 64 + cell], nodes[a.owner[cell] * 3 + c]);
}

class GnnToCnnFuse : public ::testing::Test {
 protected:
  void SetUp() override {
    Rng rng(4);
    labels = oracle::random_partition(8, 8, 9, rng);
    cells = assign_cells(Partition(8, 8, labels), 4, 4);
    nodes = uniform({cells.superpixel_count(), 4}, -1, 1, rng);
    pyramid = uniform({4, 4, 4}, -1, 1, rng);
  }
  Tensor fused(const Tensor& kernel) {
    Tape tape;
    const BridgeLevelVars p{tape.constant(Tensor::zeros({4, 8})), tape.constant(kernel)};
    return gnn_to_cnn(tape.constant(nodes), cells, tape.constant(pyramid), p).value();
  }
  std::vector<std::size_t> labels;
  CellAssignment cells;
  Tensor nodes, pyramid;
};

TEST_F(GnnToCnnFuse, LeftIdentityKeepsPyramid) { EXPECT_TRUE(fused(half_identity(4, true)).equals(pyramid)); }

TEST_F(GnnToCnnFuse, RightIdentityGivesCopiedNodes) {
  Tape tape;
  const Tensor copied = copy_to_grid(tape.constant(nodes), cells).value();
  EXPECT_TRUE(fused(half_identity(4, false)).equals(copied));
}

TEST_F(GnnToCnnFuse, OutputShapeMatchesPyramid) {
  Rng rng(1);
  EXPECT_EQ(fused(uniform({4, 8}, -1, 1, rng)).shape(), pyramid.shape());
}

TEST_F(GnnToCnnFuse, DimensionMismatchIsContractError) {
  Tape tape;
  const BridgeLevelVars p{tape.constant(Tensor::zeros({4, 8})), tape.constant(Tensor::zeros({4, 8}))};
  EXPECT_THROW(gnn_to_cnn(tape.constant(Tensor::zeros({cells.superpixel_count(), 3})), cells,
                          tape.constant(pyramid), p),
               ContractError);
}

TEST(Bridge, GradientsReachBackboneAndPyramid) {
  Rng rng(2);
  const auto labels = oracle::random_partition(8, 8, 6, rng);
  const auto cells = assign_cells(Partition(8, 8, labels), 4, 4);
  auto params = init_bridge_level(3, 2, 2, rng);
  params.fuse = uniform({2, 4}, -1, 1, rng).with_requires_grad(true);
  const Tensor c = uniform({3, 4, 4}, -1, 1, rng);
  const Tensor pyr = uniform({2, 4, 4}, -1, 1, rng);
  const Tensor w = uniform({2, 4, 4}, -1, 1, rng);
  const auto r = grad_check(
      [&](Tape& tape, std::span<const Var> v) {
        const BridgeLevelVars p{v[2], v[3]};
        Var nodes = cnn_to_gnn(v[0], cells, p);
        return ops::sum(ops::mul(gnn_to_cnn(nodes, cells, v[1], p), tape.constant(w)));
      },
      {c, pyr, params.projection, params.fuse});
  EXPECT_LT(r.max_rel_error, 1e-4);
  // Both feature inputs receive a non-zero gradient.
  Tape tape;
  Var cv = tape.leaf(c.with_requires_grad(true));
  Var pv = tape.leaf(pyr.with_requires_grad(true));
  const auto bound = gfpn::bind(tape, params);
  tape.backward(ops::sum(ops::mul(gnn_to_cnn(cnn_to_gnn(cv, cells, bound), cells, pv, bound), tape.constant(w))));
  auto nonzero = [](const Tensor& g) {
    return std::any_of(g.data().begin(), g.data().end(), [](double x) { return x != 0.0; });
  };
  EXPECT_TRUE(nonzero(tape.grad(cv)));
  EXPECT_TRUE(nonzero(tape.grad(pv)));
}

}  // namespace
}  // namespace gfpn
