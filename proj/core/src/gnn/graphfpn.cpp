#include "gfpn/gnn/graphfpn.hpp"

#include <algorithm>
#include <cmath>

#include "gfpn/errors.hpp"

namespace gfpn {

GnnLayerParams init_gnn_layer(std::size_t dim, Rng& rng) {
  GnnLayerParams p;
  p.weight = xavier_uniform({dim, dim}, dim, dim, rng);
  p.attention = xavier_uniform({2 * dim}, 2 * dim, 1, rng);
  p.gate = xavier_uniform({dim, dim}, dim, dim, rng);
  p.beta = Tensor::scalar(0.0, true);
  return p;
}

Neighborhoods make_neighborhoods(std::size_t node_count,
                                 std::span<const std::pair<std::size_t, std::size_t>> edges) {
  std::vector<std::vector<std::size_t>> adj(node_count);
  for (std::size_t i = 0; i < node_count; ++i) adj[i].push_back(i);
  for (const auto& [u, v] : edges) {
    if (u >= node_count || v >= node_count) {
      throw ContractError("make_neighborhoods: edge (" + std::to_string(u) + "," + std::to_string(v) +
                          ") outside " + std::to_string(node_count) + " nodes");
    }
    if (u == v) continue;
    adj[u].push_back(v);
    adj[v].push_back(u);
  }
  Neighborhoods nb;
  std::vector<std::size_t> offsets{0};
  for (std::size_t i = 0; i < node_count; ++i) {
    auto& a = adj[i];
    std::sort(a.begin(), a.end());
    a.erase(std::unique(a.begin(), a.end()), a.end());
    for (auto j : a) {
      nb.center.push_back(i);
      nb.member.push_back(j);
    }
    offsets.push_back(nb.member.size());
  }
  nb.groups = SegmentIndex::contiguous(std::move(offsets));
  return nb;
}

namespace {

Var coefficients_from_projection(Var wh, const Neighborhoods& nb, const GnnLayerVars& p) {
  const std::size_t d = wh.shape().at(1);
  Var a = ops::reshape(p.attention, {2, d});
  Var scores = ops::linear(wh, a);  // [N, 2]: a_1 . Wh_i and a_2 . Wh_j
  Var from_center = ops::slice_last(ops::gather_rows(scores, nb.center), 0, 1);
  Var from_member = ops::slice_last(ops::gather_rows(scores, nb.member), 1, 2);
  Var logits = ops::leaky_relu(ops::add(from_center, from_member), 0.2);
  return ops::segment_softmax(ops::reshape(logits, {nb.member.size()}), nb.groups);
}

}  // namespace

Var spatial_attention_coefficients(Var h, const Neighborhoods& nb, const GnnLayerVars& p) {
  return coefficients_from_projection(ops::linear(h, p.weight), nb, p);
}

Var spatial_attention(Var h, const Neighborhoods& nb, const GnnLayerVars& p) {
  Var wh = ops::linear(h, p.weight);
  Var alpha = coefficients_from_projection(wh, nb, p);
  Var messages = ops::scale_rows(ops::gather_rows(wh, nb.member), alpha);
  return ops::segment_reduce(messages, nb.groups, ops::Reduce::kSum);
}

Var channel_wise_attention(Var h, const Neighborhoods& nb, const GnnLayerVars& p) {
  Var mean = ops::segment_reduce(ops::gather_rows(h, nb.member), nb.groups, ops::Reduce::kMean);
  Var gate = ops::sigmoid(ops::linear(mean, p.gate));
  return ops::mul(gate, h);
}

Var channel_similarity(Var h, const Neighborhoods& nb) {
  const std::size_t n = h.shape().at(0);
  const std::size_t d = h.shape().at(1);
  Var gram = ops::segment_gram(ops::gather_rows(h, nb.member), nb.groups);
  Var x = ops::softmax_rows(ops::reshape(gram, {n * d, d}));
  return ops::reshape(x, {n, d, d});
}

namespace {

// batched_matvec(channel_similarity(h, nb), h) as a single tape record. The
// forward pass repeats the unfused arithmetic in the same order; only the
// N x D x D similarity tensor is kept for the backward pass.
Var similarity_mix(Var h, const Neighborhoods& nb) {
  Tape& tape = *h.tape();
  const std::size_t n = h.shape().at(0);
  const std::size_t d = h.shape().at(1);
  const Tensor hv = h.value();
  const double* hd = hv.data().data();
  std::vector<double> sim(n * d * d);
  std::vector<double> mixed(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    double* s = sim.data() + i * d * d;
    std::fill(s, s + d * d, 0.0);
    for (auto e : nb.groups.group(i)) {
      const double* hj = hd + nb.member[e] * d;
      for (std::size_t a = 0; a < d; ++a) {
        const double ha = hj[a];
        double* row = s + a * d;
        for (std::size_t b = 0; b < d; ++b) row[b] += ha * hj[b];
      }
    }
    const double* hi = hd + i * d;
    for (std::size_t a = 0; a < d; ++a) {
      double* row = s + a * d;
      const double mx = *std::max_element(row, row + d);
      double total = 0.0;
      for (std::size_t b = 0; b < d; ++b) {
        row[b] = std::exp(row[b] - mx);
        total += row[b];
      }
      for (std::size_t b = 0; b < d; ++b) row[b] /= total;
      double acc = 0.0;
      for (std::size_t b = 0; b < d; ++b) acc += row[b] * hi[b];
      mixed[i * d + a] = acc;
    }
  }
  Tensor out({n, d}, std::move(mixed));
  const Tensor mv = out;
  return tape.record(std::move(out), {h}, [hv, mv, sim = std::move(sim), groups = nb.groups, member = nb.member, n, d](auto g,
                                                                                             auto grads) {
    auto& gh = *grads[0];
    const double* hd = hv.data().data();
    std::vector<double> gg(d * d);
    for (std::size_t i = 0; i < n; ++i) {
      const double* s = sim.data() + i * d * d;
      const double* hi = hd + i * d;
      const double* gm = g.data() + i * d;
      const double* m = mv.data().data() + i * d;
      double* ghi = gh.data() + i * d;
      // Through the mixed vector: m = S h_i.
      for (std::size_t a = 0; a < d; ++a)
        for (std::size_t b = 0; b < d; ++b) ghi[b] += s[a * d + b] * gm[a];
      // Through the row softmax onto the Gram matrix, symmetrised.
      for (std::size_t a = 0; a < d; ++a)
        for (std::size_t b = 0; b < d; ++b) gg[a * d + b] = gm[a] * s[a * d + b] * (hi[b] - m[a]);
      for (std::size_t a = 0; a < d; ++a)
        for (std::size_t b = a; b < d; ++b) {
          const double v = gg[a * d + b] + gg[b * d + a];
          gg[a * d + b] = v;
          gg[b * d + a] = v;
        }
      for (auto e : groups.group(i)) {
        const std::size_t j = member[e];
        const double* hj = hd + j * d;
        double* ghj = gh.data() + j * d;
        for (std::size_t a = 0; a < d; ++a) {
          double acc = 0.0;
          for (std::size_t b = 0; b < d; ++b) acc += gg[a * d + b] * hj[b];
          ghj[a] += acc;
        }
      }
    }
  });
}

}  // namespace

Var channel_self_attention(Var h, const Neighborhoods& nb, const GnnLayerVars& p) {
  return ops::add(ops::mul(p.beta, similarity_mix(h, nb)), h);
}

Var gnn_layer(Var h, const Neighborhoods& nb, const GnnLayerVars& p, const AttentionToggles& toggles) {
  if (h.shape().size() != 2 || h.shape()[0] != nb.node_count()) {
    throw DimensionError("gnn_layer: features " + shape_string(h.shape()) + " for " +
                         std::to_string(nb.node_count()) + " nodes");
  }
  if (toggles.spatial) h = spatial_attention(h, nb, p);
  if (toggles.channel_wise) h = channel_wise_attention(h, nb, p);
  if (toggles.channel_self) h = channel_self_attention(h, nb, p);
  return h;
}

std::vector<GnnLayerParams> init_graphfpn(const LayerSchedule& schedule, std::size_t dim, Rng& rng) {
  std::vector<GnnLayerParams> layers;
  layers.reserve(schedule.total());
  for (std::size_t i = 0; i < schedule.total(); ++i) layers.push_back(init_gnn_layer(dim, rng));
  return layers;
}

Var run_graphfpn(Var h0, const GraphPyramid& graph, const LayerSchedule& schedule,
                 std::span<const GnnLayerVars> layers, const AttentionToggles& attention,
                 const GroupToggles& groups) {
  if (layers.size() != schedule.total()) {
    throw ContractError("run_graphfpn: " + std::to_string(layers.size()) + " parameter sets for " +
                        std::to_string(schedule.total()) + " layers");
  }
  const std::size_t n = graph.node_count();
  const auto ctx_edges = contextual_edges(graph);
  const auto hier_edges = surviving_hierarchical_edges(graph);
  const Neighborhoods contextual = make_neighborhoods(n, ctx_edges);
  const Neighborhoods hierarchical = make_neighborhoods(n, hier_edges);

  Var h = h0;
  std::size_t k = 0;
  auto run_group = [&](std::size_t count, bool enabled, const Neighborhoods& nb) {
    for (std::size_t i = 0; i < count; ++i, ++k) {
      if (enabled) h = gnn_layer(h, nb, layers[k], attention);
    }
  };
  run_group(schedule.contextual_before, groups.contextual_before, contextual);
  run_group(schedule.hierarchical, groups.hierarchical, hierarchical);
  run_group(schedule.contextual_after, groups.contextual_after, contextual);
  return h;
}

}  // namespace gfpn
