#include "gfpn/pipeline/gradcheck_suite.hpp"

#include <cmath>
#include <optional>

#include "gfpn/bridge/bridge.hpp"
#include "gfpn/gnn/graphfpn.hpp"
#include "gfpn/numerics/init.hpp"
#include "gfpn/numerics/ops.hpp"
#include "gfpn/pipeline/config.hpp"
#include "gfpn/pipeline/dataset.hpp"
#include "gfpn/pipeline/model.hpp"

namespace gfpn {
namespace {

// Weighted sum with fixed weights so that every output coordinate matters
// differently.
Var probe(Tape& tape, Var out) {
  std::vector<double> w(out.value().size());
  for (std::size_t k = 0; k < w.size(); ++k) w[k] = std::sin(0.7 * static_cast<double>(k) + 0.3);
  return ops::sum(ops::mul(out, tape.constant(Tensor(out.shape(), std::move(w)))));
}

class Suite {
 public:
  explicit Suite(std::uint64_t seed) : rng_(seed) {}

  Tensor rand(Shape shape, double lo = -1.0, double hi = 1.0) { return uniform(std::move(shape), lo, hi, rng_); }

  template <class F>
  void add(const std::string& name, std::vector<Tensor> params, F&& body) {
    ScalarFunction f = [body](Tape& tape, std::span<const Var> v) { return probe(tape, body(tape, v)); };
    cases_.push_back({name, grad_check(f, params)});
  }
  template <class F>
  void add_scalar(const std::string& name, std::vector<Tensor> params, F&& body) {
    cases_.push_back({name, grad_check(ScalarFunction(body), params)});
  }

  Rng& rng() { return rng_; }
  std::vector<GradCheckCase> take() { return std::move(cases_); }

 private:
  Rng rng_;
  std::vector<GradCheckCase> cases_;
};

void primitives(Suite& s) {
  using namespace ops;
  const SegmentIndex groups = SegmentIndex::from_groups({{0, 2}, {1, 4, 5}, {3}});
  s.add("add", {s.rand({2, 3}), s.rand({2, 3})}, [](Tape&, auto v) { return add(v[0], v[1]); });
  s.add("add_scalar", {s.rand({2, 3}), s.rand({})}, [](Tape&, auto v) { return add(v[0], v[1]); });
  s.add("sub", {s.rand({2, 3}), s.rand({2, 3})}, [](Tape&, auto v) { return sub(v[0], v[1]); });
  s.add("mul", {s.rand({2, 3}), s.rand({2, 3})}, [](Tape&, auto v) { return mul(v[0], v[1]); });
  s.add("mul_scalar", {s.rand({}), s.rand({4})}, [](Tape&, auto v) { return mul(v[0], v[1]); });
  s.add("scale", {s.rand({5})}, [](Tape&, auto v) { return scale(v[0], -1.7); });
  s.add("sigmoid", {s.rand({6}, -3, 3)}, [](Tape&, auto v) { return sigmoid(v[0]); });
  s.add("relu", {s.rand({8})}, [](Tape&, auto v) { return relu(v[0]); });
  s.add("leaky_relu", {s.rand({8})}, [](Tape&, auto v) { return leaky_relu(v[0]); });
  s.add("concat", {s.rand({3, 2}), s.rand({3, 4})}, [](Tape&, auto v) { return concat(v[0], v[1]); });
  s.add("slice_last", {s.rand({3, 5})}, [](Tape&, auto v) { return slice_last(v[0], 1, 4); });
  s.add("concat_rows", {s.rand({2, 3}), s.rand({1, 3}), s.rand({3, 3})},
        [](Tape&, auto v) { return concat_rows(v); });
  s.add("reshape", {s.rand({2, 6})}, [](Tape&, auto v) { return reshape(v[0], {3, 4}); });
  s.add("linear", {s.rand({4, 3}), s.rand({5, 3})}, [](Tape&, auto v) { return linear(v[0], v[1]); });
  s.add("linear_rank3", {s.rand({2, 4, 3}), s.rand({2, 3})}, [](Tape&, auto v) { return linear(v[0], v[1]); });
  s.add("add_bias", {s.rand({4, 3}), s.rand({3})}, [](Tape&, auto v) { return add_bias(v[0], v[1]); });
  s.add("softmax_rows", {s.rand({3, 4}, -2, 2)}, [](Tape&, auto v) { return softmax_rows(v[0]); });
  s.add("segment_softmax", {s.rand({6}, -2, 2)},
        [groups](Tape&, auto v) { return segment_softmax(v[0], groups); });
  const std::pair<const char*, Reduce> modes[] = {
      {"segment_mean", Reduce::kMean}, {"segment_max", Reduce::kMax}, {"segment_min", Reduce::kMin},
      {"segment_sum", Reduce::kSum}};
  for (const auto& [name, mode] : modes) {
    s.add(name, {s.rand({6, 3})}, [groups, mode](Tape&, auto v) { return segment_reduce(v[0], groups, mode); });
  }
  const std::vector<std::size_t> rows{3, 0, 3, 1};
  s.add("gather_rows", {s.rand({4, 2})}, [rows](Tape&, auto v) { return gather_rows(v[0], rows); });
  s.add("scale_rows", {s.rand({4, 3}), s.rand({4})}, [](Tape&, auto v) { return scale_rows(v[0], v[1]); });
  s.add("segment_gram", {s.rand({6, 3})}, [groups](Tape&, auto v) { return segment_gram(v[0], groups); });
  s.add("batched_matvec", {s.rand({2, 3, 4}), s.rand({2, 4})},
        [](Tape&, auto v) { return batched_matvec(v[0], v[1]); });
  s.add("conv2d_1x1", {s.rand({2, 4, 5}), s.rand({3, 2, 1, 1})},
        [](Tape&, auto v) { return conv2d(v[0], v[1], 1); });
  s.add("conv2d_3x3", {s.rand({2, 5, 4}), s.rand({3, 2, 3, 3})},
        [](Tape&, auto v) { return conv2d(v[0], v[1], 1); });
  s.add("conv2d_3x3_stride2", {s.rand({2, 6, 6}), s.rand({2, 2, 3, 3})},
        [](Tape&, auto v) { return conv2d(v[0], v[1], 2); });
  s.add("add_channel_bias", {s.rand({2, 3, 3}), s.rand({2})},
        [](Tape&, auto v) { return add_channel_bias(v[0], v[1]); });
  s.add("upsample2x", {s.rand({2, 2, 3})}, [](Tape&, auto v) { return upsample2x(v[0]); });
  s.add("channels_to_rows", {s.rand({2, 3, 2})}, [](Tape&, auto v) { return channels_to_rows(v[0]); });
  s.add("rows_to_channels", {s.rand({6, 2})}, [](Tape&, auto v) { return rows_to_channels(v[0], 2, 3); });
  s.add("sum", {s.rand({3, 2})}, [](Tape&, auto v) { return sum(v[0]); });
  const std::vector<std::size_t> labels{2, 0, 1};
  s.add_scalar("cross_entropy", {s.rand({3, 4}, -2, 2)},
               [labels](Tape&, std::span<const Var> v) { return cross_entropy(v[0], labels); });
}

struct MicroSample {
  TrainConfig config;
  PreparedSample sample;
};

MicroSample micro_sample(std::uint64_t seed) {
  MicroSample m{micro_config(), {}};
  m.config.seed = seed;
  const auto raw = gen_dataset(derive_seed(seed, 7), 1, m.config.image_size, m.config.shape_classes);
  m.sample = prepare_sample(raw[0], m.config.superpixels, true, m.config.shape_classes + 1);
  return m;
}

GnnLayerParams layer_with_beta(std::size_t dim, Rng& rng) {
  GnnLayerParams p = init_gnn_layer(dim, rng);
  p.beta = Tensor::scalar(0.6, true);  // non-zero so the self-attention branch is exercised
  return p;
}

std::vector<Tensor> layer_tensors(const GnnLayerParams& p) { return {p.weight, p.attention, p.gate, p.beta}; }
GnnLayerVars layer_vars(std::span<const Var> v, std::size_t at) { return {v[at], v[at + 1], v[at + 2], v[at + 3]}; }

void layers(Suite& s) {
  const MicroSample m = micro_sample(11);
  const GraphPyramid& graph = *m.sample.graph;
  const std::size_t d = m.config.feature_dim;
  const std::size_t nodes = graph.node_count();
  const Neighborhoods nb = make_neighborhoods(nodes, contextual_edges(graph));

  const GnnLayerParams p = layer_with_beta(d, s.rng());
  std::vector<Tensor> args{s.rand({nodes, d})};
  for (auto& t : layer_tensors(p)) args.push_back(t);

  s.add("spatial_attention_coefficients", args,
        [nb](Tape&, auto v) { return spatial_attention_coefficients(v[0], nb, layer_vars(v, 1)); });
  s.add("spatial_attention", args, [nb](Tape&, auto v) { return spatial_attention(v[0], nb, layer_vars(v, 1)); });
  s.add("channel_wise_attention", args,
        [nb](Tape&, auto v) { return channel_wise_attention(v[0], nb, layer_vars(v, 1)); });
  s.add("channel_similarity", {args[0]}, [nb](Tape&, auto v) { return channel_similarity(v[0], nb); });
  s.add("channel_self_attention", args,
        [nb](Tape&, auto v) { return channel_self_attention(v[0], nb, layer_vars(v, 1)); });
  s.add("gnn_layer", args, [nb](Tape&, auto v) { return gnn_layer(v[0], nb, layer_vars(v, 1)); });

  // One layer per group over the pruned graph.
  const LayerSchedule schedule{1, 1, 1};
  std::vector<Tensor> stack{args[0]};
  for (std::size_t l = 0; l < schedule.total(); ++l)
    for (auto& t : layer_tensors(layer_with_beta(d, s.rng()))) stack.push_back(t);
  const GraphPyramid pruned = prune_hierarchical(graph, args[0]);
  s.add("run_graphfpn", stack, [pruned, schedule](Tape&, auto v) {
    std::vector<GnnLayerVars> ls;
    for (std::size_t l = 0; l < schedule.total(); ++l) ls.push_back(layer_vars(v, 1 + 4 * l));
    return run_graphfpn(v[0], pruned, schedule, ls);
  });

  // Bridges on level 2, where cells hold several pixels.
  const CellAssignment& cells = m.sample.cells[1];
  const std::size_t c = 5;
  const BridgeLevelParams bp = init_bridge_level(c, d, d, s.rng());
  const std::size_t h = cells.grid_height;
  const std::size_t w = cells.grid_width;
  s.add("cnn_to_gnn", {s.rand({c, h, w}), bp.projection, s.rand(bp.fuse.shape())}, [cells](Tape&, auto v) {
    return cnn_to_gnn(v[0], cells, BridgeLevelVars{v[1], v[2]});
  });
  const std::size_t k = cells.superpixel_count();
  s.add("copy_to_grid", {s.rand({k, d})}, [cells](Tape&, auto v) { return copy_to_grid(v[0], cells); });
  s.add("gnn_to_cnn", {s.rand({k, d}), s.rand({d, h, w}), bp.projection, s.rand(bp.fuse.shape())}, [cells](Tape&, auto v) {
    return gnn_to_cnn(v[0], cells, v[1], BridgeLevelVars{v[2], v[3]});
  });

  // Backbone on an 8x8 input (stage sizes 8, 4, 2, 1, 1 would not halve, so
  // use a 16x16 image with tiny stages) and the FPN on its outputs.
  BackboneConfig bb{{2, 3, 3, 4, 4}, 3, 16};
  const auto stages = init_backbone(bb, s.rng());
  std::vector<Tensor> bargs{s.rand({3, 16, 16}, 0.0, 1.0)};
  for (const auto& st : stages)
    for (const auto& t : {st.conv1, st.bias1, st.conv2, st.bias2}) bargs.push_back(t.with_requires_grad(true));
  // Non-zero biases keep pre-activations away from the ReLU kink at 0.
  for (std::size_t i = 2; i < bargs.size(); i += 2) bargs[i] = s.rand(bargs[i].shape(), -0.1, 0.1);
  auto unpack = [](std::span<const Var> v) {
    std::vector<ConvStageVars> st;
    for (std::size_t i = 0; i < kPyramidLevels; ++i)
      st.push_back({v[1 + 4 * i], v[2 + 4 * i], v[3 + 4 * i], v[4 + 4 * i]});
    return st;
  };
  s.add("backbone_forward", bargs, [unpack](Tape&, auto v) {
    auto c_maps = backbone_forward(v[0], unpack(v));
    std::vector<Var> flat;
    for (auto& x : c_maps) flat.push_back(ops::reshape(x, {x.value().size()}));
    return ops::concat(ops::concat(ops::concat(flat[0], flat[1]), ops::concat(flat[2], flat[3])), flat[4]);
  });

  const auto fpn = init_fpn(bb, s.rng());
  std::vector<Tensor> fargs;
  for (std::size_t l = 0; l < kPyramidLevels; ++l) {
    fargs.push_back(s.rand({bb.stage_channels[l], bb.level_size(l), bb.level_size(l)}));
  }
  for (const auto& p : fpn)
    for (const auto& t : {p.lateral, p.lateral_bias, p.smooth, p.smooth_bias}) fargs.push_back(t);
  s.add("fpn_forward", fargs, [](Tape&, auto v) {
    std::vector<FpnLevelVars> lv;
    for (std::size_t i = 0; i < kPyramidLevels; ++i)
      lv.push_back({v[5 + 4 * i], v[6 + 4 * i], v[7 + 4 * i], v[8 + 4 * i]});
    auto p = fpn_forward(std::span<const Var>(v.data(), kPyramidLevels), lv);
    Var out = ops::reshape(p[0], {p[0].value().size()});
    for (std::size_t i = 1; i < p.size(); ++i) out = ops::concat(out, ops::reshape(p[i], {p[i].value().size()}));
    return out;
  });
}

void full(Suite& s) {
  for (const bool graph : {true, false}) {
    MicroSample m = micro_sample(5);
    m.config.ablation.graphfpn = graph;
    Rng rng(derive_seed(m.config.seed, 0));
    ModelParams params = init_model(m.config, rng);
    // Non-zero beta, biases and graph half of the fuse kernels so every branch carries gradient.
    for_each_param(params, [&](const std::string& name, Tensor& t) {
      if (name.ends_with("beta")) t = Tensor::scalar(0.5, true);
      if (name.ends_with("fuse")) t = s.rand(t.shape()).with_requires_grad(true);
      if (name.ends_with("bias") || name.ends_with("bias1") || name.ends_with("bias2")) {
        t = s.rand(t.shape(), -0.1, 0.1).with_requires_grad(true);
      }
    });
    const ModelParams layout = params;
    const PreparedSample sample = m.sample;
    const TrainConfig config = m.config;
    // Pruning is piecewise constant in the parameters, so the check holds the
    // topology found at the unperturbed point.
    std::optional<GraphPyramid> topology;
    if (graph) {
      Tape tape;
      topology = forward_pipeline(bind_model(tape, params, false), sample, config).pruned;
    }
    s.add_scalar(graph ? "pipeline_loss" : "pipeline_loss_fpn_only", flatten(params),
                 [layout, sample, config, topology](Tape&, std::span<const Var> v) {
                   const ForwardResult r =
                       forward_pipeline(assemble_vars(layout, v), sample, config, topology ? &*topology : nullptr);
                   return ops::cross_entropy(r.logits, sample.region_labels);
                 });
  }
}

}  // namespace

std::vector<GradCheckCase> run_gradcheck_suite(GradCheckLevel level, std::uint64_t seed) {
  Suite s(seed);
  switch (level) {
    case GradCheckLevel::kMicro:
      primitives(s);
      break;
    case GradCheckLevel::kLayer:
      layers(s);
      break;
    case GradCheckLevel::kFull:
      full(s);
      break;
  }
  return s.take();
}

}  // namespace gfpn
