#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "gfpn/errors.hpp"
#include "gfpn/numerics/grad_check.hpp"
#include "gfpn/numerics/init.hpp"
#include "gfpn/numerics/ops.hpp"
#include "oracles.hpp"

namespace gfpn {
namespace {

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

TEST(Tensor, RejectsNonFiniteAndBadLength) {
  EXPECT_THROW(Tensor({2}, {1.0, std::numeric_limits<double>::quiet_NaN()}), ContractError);
  EXPECT_THROW(Tensor({1}, {std::numeric_limits<double>::infinity()}), ContractError);
  EXPECT_THROW(Tensor({2, 2}, {1.0, 2.0, 3.0}), DimensionError);
}

TEST(Tensor, ReshapeSharesValues) {
  const Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
  const Tensor r = t.reshaped({3, 2});
  EXPECT_EQ(r.shape(), (Shape{3, 2}));
  EXPECT_EQ(values(r), values(t));
}

TEST(Linear, HandProduct) {
  Tape tape;
  Var x = tape.constant(Tensor::matrix({{1, 2}, {3, 4}}));
  Var w = tape.constant(Tensor::matrix({{1, 1}}));
  EXPECT_EQ(values(ops::linear(x, w).value()), (std::vector<double>{3, 7}));
}

TEST(Linear, IdentityWeight) {
  Tape tape;
  Rng rng(3);
  const Tensor xs = uniform({4, 3}, -1, 1, rng);
  Var y = ops::linear(tape.constant(xs), tape.constant(Tensor::identity(3)));
  EXPECT_EQ(values(y.value()), values(xs));
}

TEST(Linear, ShapeMismatchNamesBothShapes) {
  Tape tape;
  try {
    ops::linear(tape.constant(Tensor::zeros({2, 3})), tape.constant(Tensor::zeros({4, 5})));
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2,3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[4,5]"), std::string::npos) << msg;
  }
}

TEST(Linear, GradientOfSumIsColumnSumOfWeight) {
  Rng rng(0);
  const Tensor x = uniform({3, 4}, -1, 1, rng);
  const Tensor w = uniform({2, 4}, -1, 1, rng);
  Tape tape;
  Var xv = tape.leaf(x.with_requires_grad(true));
  Var wv = tape.leaf(w.with_requires_grad(true));
  tape.backward(ops::sum(ops::linear(xv, wv)));
  const Tensor gx = tape.grad(xv);
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t k = 0; k < 4; ++k) EXPECT_DOUBLE_EQ(gx[r * 4 + k], w[k] + w[4 + k]);

  const auto res = grad_check(
      [](Tape&, std::span<const Var> v) { return ops::sum(ops::linear(v[0], v[1])); }, {x, w});
  EXPECT_LT(res.max_rel_error, 1e-8);
}

TEST(SoftmaxRows, KnownRows) {
  Tape tape;
  Var y = ops::softmax_rows(tape.constant(Tensor::matrix({{0, 0}, {1, 0}, {1000, 0}})));
  const Tensor& v = y.value();
  EXPECT_DOUBLE_EQ(v[0], 0.5);
  EXPECT_DOUBLE_EQ(v[1], 0.5);
  EXPECT_NEAR(v[2], 0.7310586, 1e-7);
  EXPECT_NEAR(v[3], 0.2689414, 1e-7);
  EXPECT_EQ(v[4], 1.0);
  EXPECT_EQ(v[5], 0.0);
}

TEST(SoftmaxRows, RowsSumToOne) {
  Rng rng(9);
  Tape tape;
  const Tensor x = uniform({20, 7}, -30, 30, rng);
  const Tensor& y = ops::softmax_rows(tape.constant(x)).value();
  for (std::size_t r = 0; r < 20; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < 7; ++c) {
      EXPECT_GE(y[r * 7 + c], 0.0);
      s += y[r * 7 + c];
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(SegmentReduce, HandExample) {
  Tape tape;
  Var x = tape.constant(Tensor::matrix({{1, 2}, {3, 0}}));
  const auto g = SegmentIndex::from_groups({{0, 1}});
  EXPECT_EQ(values(ops::segment_reduce(x, g, ops::Reduce::kMax).value()), (std::vector<double>{3, 2}));
  EXPECT_EQ(values(ops::segment_reduce(x, g, ops::Reduce::kMin).value()), (std::vector<double>{1, 0}));
}

TEST(SegmentReduce, SingletonGroupIsIdentity) {
  Tape tape;
  Var x = tape.constant(Tensor::matrix({{1.5, -2}, {3, 0.25}}));
  const auto g = SegmentIndex::from_groups({{1}});
  for (auto mode : {ops::Reduce::kMean, ops::Reduce::kMax, ops::Reduce::kMin, ops::Reduce::kSum}) {
    EXPECT_EQ(values(ops::segment_reduce(x, g, mode).value()), (std::vector<double>{3, 0.25}));
  }
}

TEST(SegmentReduce, EmptyGroupThrows) {
  Tape tape;
  Var x = tape.constant(Tensor::zeros({3, 2}));
  EXPECT_THROW(ops::segment_reduce(x, SegmentIndex::from_groups({{0}, {}}), ops::Reduce::kMean),
               EmptyGroupError);
}

TEST(SegmentReduce, MatchesLoopOracleExactly) {
  Rng rng(0);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor x = uniform({50, 3}, -1, 1, rng);
    // Random disjoint groups over a random subset of rows.
    std::vector<std::size_t> perm(50);
    for (std::size_t i = 0; i < 50; ++i) perm[i] = i;
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<std::vector<std::size_t>> groups(7);
    for (std::size_t i = 0; i < 45; ++i) groups[i % 7].push_back(perm[i]);
    const auto idx = SegmentIndex::from_groups(groups);
    const auto rows = oracle::to_rows(x);
    const std::pair<ops::Reduce, oracle::Mode> modes[] = {{ops::Reduce::kMean, oracle::Mode::kMean},
                                                          {ops::Reduce::kMax, oracle::Mode::kMax},
                                                          {ops::Reduce::kMin, oracle::Mode::kMin},
                                                          {ops::Reduce::kSum, oracle::Mode::kSum}};
    for (const auto& [mode, omode] : modes) {
      Tape tape;
      const Tensor got = ops::segment_reduce(tape.constant(x), idx, mode).value();
      EXPECT_EQ(oracle::to_rows(got), oracle::segment_reduce(rows, groups, omode));
    }
  }
}

TEST(SegmentReduce, MaxTiesRouteGradientToFirstMember) {
  Tape tape;
  Var x = tape.leaf(Tensor({3, 1}, {2.0, 2.0, 1.0}, true));
  tape.backward(ops::sum(ops::segment_reduce(x, SegmentIndex::from_groups({{1, 0, 2}}), ops::Reduce::kMax)));
  EXPECT_EQ(values(tape.grad(x)), (std::vector<double>{0, 1, 0}));
}

TEST(Elementwise, HandExamples) {
  Tape tape;
  Var gate = ops::sigmoid(tape.constant(Tensor::scalar(0.0)));
  EXPECT_EQ(values(ops::mul(gate, tape.constant(Tensor::vector({2, 4}))).value()), (std::vector<double>{1, 2}));
  EXPECT_EQ(values(ops::concat(tape.constant(Tensor::vector({3, 2})), tape.constant(Tensor::vector({1, 0})))
                       .value()),
            (std::vector<double>{3, 2, 1, 0}));
  EXPECT_EQ(values(ops::leaky_relu(tape.constant(Tensor::vector({-1, 2}))).value()),
            (std::vector<double>{-0.2, 2}));
}

TEST(Elementwise, IncompatibleShapesThrow) {
  Tape tape;
  EXPECT_THROW(ops::add(tape.constant(Tensor::zeros({2})), tape.constant(Tensor::zeros({3}))), DimensionError);
}

TEST(Elementwise, KinkDerivativesAreZero) {
  Tape tape;
  Var x = tape.leaf(Tensor({1}, {0.0}, true));
  tape.backward(ops::sum(ops::add(ops::relu(x), ops::leaky_relu(x))));
  EXPECT_EQ(tape.grad(x)[0], 0.0);
}

TEST(Concat, SliceRecoversInputs) {
  Rng rng(4);
  const Tensor a = uniform({3, 2}, -1, 1, rng);
  const Tensor b = uniform({3, 5}, -1, 1, rng);
  Tape tape;
  Var c = ops::concat(tape.constant(a), tape.constant(b));
  EXPECT_EQ(values(ops::slice_last(c, 0, 2).value()), values(a));
  EXPECT_EQ(values(ops::slice_last(c, 2, 7).value()), values(b));
}

TEST(Conv2d, IdentityOneByOne) {
  Rng rng(1);
  const Tensor x = uniform({3, 4, 5}, -1, 1, rng);
  std::vector<double> k(9, 0.0);
  for (std::size_t c = 0; c < 3; ++c) k[c * 3 + c] = 1.0;
  Tape tape;
  EXPECT_EQ(values(ops::conv2d(tape.constant(x), tape.constant(Tensor({3, 3, 1, 1}, k))).value()), values(x));
}

TEST(Conv2d, OnesKernelOnConstantImage) {
  Tape tape;
  const Tensor& y =
      ops::conv2d(tape.constant(Tensor::full({1, 5, 5}, 0.5)), tape.constant(Tensor::full({1, 1, 3, 3}, 1.0)))
          .value();
  EXPECT_EQ(y[2 * 5 + 2], 4.5);
  EXPECT_EQ(y[0], 2.0);  // corner sees 4 pixels
}

TEST(Conv2d, OutputSizeIsCeilOfInputOverStride) {
  Tape tape;
  Var y = ops::conv2d(tape.constant(Tensor::zeros({1, 7, 8})), tape.constant(Tensor::zeros({2, 1, 3, 3})), 2);
  EXPECT_EQ(y.shape(), (Shape{2, 4, 4}));
}

TEST(Conv2d, ChannelMismatchThrows) {
  Tape tape;
  EXPECT_THROW(ops::conv2d(tape.constant(Tensor::zeros({2, 4, 4})), tape.constant(Tensor::zeros({1, 3, 3, 3}))),
               DimensionError);
}

TEST(Conv2d, MatchesLoopOracleExactly) {
  Rng rng(0);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t stride = trial % 2 == 0 ? 2 : 1;
    const std::size_t ks = trial % 3 == 0 ? 1 : 3;
    const Tensor x = uniform({2, 8, 8}, -1, 1, rng);
    const Tensor k = uniform({3, 2, ks, ks}, -1, 1, rng);
    Tape tape;
    EXPECT_EQ(values(ops::conv2d(tape.constant(x), tape.constant(k), stride).value()),
              oracle::conv2d(x, k, stride))
        << "trial " << trial;
  }
}

TEST(Upsample, ReplicatesIntoBlocks) {
  Tape tape;
  const Tensor& y = ops::upsample2x(tape.constant(Tensor({1, 2, 2}, {1, 2, 3, 4}))).value();
  EXPECT_EQ(values(y), (std::vector<double>{1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4}));
}

TEST(Backward, RequiresScalarLoss) {
  Tape tape;
  Var x = tape.leaf(Tensor({2}, {1, 2}, true));
  EXPECT_THROW(tape.backward(ops::scale(x, 2.0)), ContractError);
}

TEST(Backward, AccumulatesOverUseSites) {
  Tape tape;
  Var x = tape.leaf(Tensor({1}, {3.0}, true));
  tape.backward(ops::sum(ops::add(ops::mul(x, x), x)));
  EXPECT_EQ(tape.grad(x)[0], 7.0);
}

TEST(Backward, TapeIsReusable) {
  Tape tape;
  Var x = tape.leaf(Tensor({1}, {2.0}, true));
  tape.backward(ops::sum(ops::mul(x, x)));
  EXPECT_EQ(tape.grad(x)[0], 4.0);
  tape.reset();
  Var y = tape.leaf(Tensor({1}, {5.0}, true));
  tape.backward(ops::sum(ops::scale(y, 3.0)));
  EXPECT_EQ(tape.grad(y)[0], 3.0);
}

TEST(GradCheck, Square) {
  const auto r = grad_check([](Tape&, std::span<const Var> v) { return ops::sum(ops::mul(v[0], v[0])); },
                            {Tensor({1}, {3.0})});
  EXPECT_NEAR(r.worst_analytic, 6.0, 0.0);
  EXPECT_NEAR(r.worst_numeric, 6.0, 1e-8);
  EXPECT_LT(r.max_rel_error, 1e-10);
}

TEST(GradCheck, ConstantFunctionHasZeroGradient) {
  const auto r = grad_check(
      [](Tape& tape, std::span<const Var> v) {
        return ops::add(ops::scale(ops::sum(v[0]), 0.0), tape.constant(Tensor::scalar(1.5)));
      },
      {Tensor({3}, {1, 2, 3})});
  EXPECT_EQ(r.worst_analytic, 0.0);
  EXPECT_EQ(r.worst_numeric, 0.0);
}

TEST(GradCheck, CompositionOfPrimitives) {
  Rng rng(2);
  const Tensor x = uniform({4, 3}, -1, 1, rng);
  const Tensor w = uniform({3, 3}, -1, 1, rng);
  const auto groups = SegmentIndex::from_groups({{0, 3}, {1, 2}});
  const auto r = grad_check(
      [groups](Tape&, std::span<const Var> v) {
        Var h = ops::sigmoid(ops::linear(v[0], v[1]));
        Var s = ops::softmax_rows(ops::segment_reduce(h, groups, ops::Reduce::kMean));
        return ops::sum(ops::mul(s, s));
      },
      {x, w});
  EXPECT_LT(r.max_rel_error, 1e-4);
}

}  // namespace
}  // namespace gfpn
