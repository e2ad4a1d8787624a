#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "gfpn/numerics/segment_index.hpp"
#include "gfpn/numerics/tape.hpp"

// Differentiable primitives. Every reduction accumulates in ascending index
// order starting from 0.0 so results are reproducible bit for bit.
namespace gfpn::ops {

enum class Reduce { kMean, kMax, kMin, kSum };

// Element-wise. Operands must have equal shapes, or one of them is a scalar.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var sigmoid(Var x);
/// ReLU'(0) = 0.
Var relu(Var x);
/// Slope `negative_slope` below zero; derivative at 0 is 0.
Var leaky_relu(Var x, double negative_slope = 0.2);

/// Concatenate along the last axis; leading dimensions must agree.
Var concat(Var a, Var b);
/// Columns [begin, end) of the last axis.
Var slice_last(Var x, std::size_t begin, std::size_t end);
/// Stack along axis 0; trailing dimensions must agree.
Var concat_rows(std::span<const Var> parts);
Var reshape(Var x, Shape shape);

/// x[.., K] times W[M, K] transposed -> [.., M].
Var linear(Var x, Var weight);
/// x[R, M] + b[M] broadcast over rows.
Var add_bias(Var x, Var bias);

Var softmax_rows(Var x);
/// Softmax within each group of a rank-1 tensor; groups must cover every element.
Var segment_softmax(Var x, const SegmentIndex& groups);
/// x[N, C] reduced per group -> [G, C]. Max/min route gradient to the first
/// attaining element in group order. Throws EmptyGroupError on empty groups.
Var segment_reduce(Var x, const SegmentIndex& groups, Reduce mode);
/// Rows of x[N, C] selected by `rows` -> [E, C].
Var gather_rows(Var x, std::span<const std::size_t> rows);
/// x[E, C] with row e multiplied by w[e].
Var scale_rows(Var x, Var w);
/// Per group: sum of outer products x_e x_e^T over member rows -> [G, C, C].
Var segment_gram(Var x, const SegmentIndex& groups);
/// m[G, R, C] times v[G, C] -> [G, R].
Var batched_matvec(Var m, Var v);

/// Cross-correlation of x[Cin, H, W] with k[Cout, Cin, kh, kw], kh == kw in
/// {1, 3}. 3x3 kernels use zero "same" padding, 1x1 none.
Var conv2d(Var x, Var kernel, std::size_t stride = 1);
/// x[C, H, W] + b[C].
Var add_channel_bias(Var x, Var bias);
/// Nearest-neighbour upsampling of x[C, H, W] to [C, 2H, 2W].
Var upsample2x(Var x);
/// [C, H, W] -> [H*W, C].
Var channels_to_rows(Var x);
/// [H*W, C] -> [C, H, W].
Var rows_to_channels(Var x, std::size_t height, std::size_t width);

Var sum(Var x);
/// Mean softmax cross-entropy of logits[R, K] against integer labels.
Var cross_entropy(Var logits, std::span<const std::size_t> labels);

}  // namespace gfpn::ops
