#include "gfpn/pipeline/model.hpp"

#include "gfpn/errors.hpp"

namespace gfpn {

ModelParams init_model(const TrainConfig& config, Rng& rng) {
  const BackboneConfig bb = config.backbone();
  ModelParams m;
  m.backbone = init_backbone(bb, rng);
  m.fpn = init_fpn(bb, rng);
  for (auto c : bb.stage_channels) {
    m.bridge.push_back(init_bridge_level(c, config.feature_dim, bb.fpn_channels, rng));
  }
  m.gnn = init_graphfpn(config.schedule, config.feature_dim, rng);
  const std::size_t classes = config.shape_classes + 1;
  m.head.weight = xavier_uniform({classes, bb.fpn_channels}, bb.fpn_channels, classes, rng);
  m.head.bias = Tensor::zeros({classes}, true);
  return m;
}

ModelVars bind_model(Tape& tape, const ModelParams& params, bool track_gradients) {
  ModelVars v;
  v.backbone = bind(tape, params.backbone, track_gradients);
  v.fpn = bind(tape, params.fpn, track_gradients);
  v.bridge = bind(tape, params.bridge, track_gradients);
  v.gnn = bind(tape, params.gnn, track_gradients);
  v.head = bind(tape, params.head, track_gradients);
  return v;
}

std::size_t parameter_count(const ModelParams& params) {
  std::size_t n = 0;
  for_each_param(params, [&](const std::string&, const Tensor& t) { n += t.size(); });
  return n;
}

std::vector<Tensor> flatten(const ModelParams& params) {
  std::vector<Tensor> out;
  for_each_param(params, [&](const std::string&, const Tensor& t) { out.push_back(t); });
  return out;
}

ModelVars assemble_vars(const ModelParams& layout, std::span<const Var> flat) {
  ModelVars v;
  v.backbone.resize(layout.backbone.size());
  v.fpn.resize(layout.fpn.size());
  v.bridge.resize(layout.bridge.size());
  v.gnn.resize(layout.gnn.size());
  std::size_t i = 0;
  for_each_param(v, [&](const std::string& name, Var& var) {
    if (i >= flat.size()) throw ContractError("assemble_vars: too few values, missing " + name);
    var = flat[i++];
  });
  if (i != flat.size()) throw ContractError("assemble_vars: too many values");
  return v;
}

namespace {

// Mean of the feature rows of the cells each superpixel pools from.
Var superpixel_means(Var map, const CellAssignment& cells) {
  std::vector<std::size_t> rows;
  std::vector<std::size_t> offsets{0};
  for (std::size_t k = 0; k < cells.superpixel_count(); ++k) {
    const auto& pool = cells.pooling_cells(k);
    rows.insert(rows.end(), pool.begin(), pool.end());
    offsets.push_back(rows.size());
  }
  Var gathered = ops::gather_rows(ops::channels_to_rows(map), rows);
  return ops::segment_reduce(gathered, SegmentIndex::contiguous(std::move(offsets)), ops::Reduce::kMean);
}

}  // namespace

ForwardResult forward_pipeline(const ModelVars& model, const PreparedSample& sample, const TrainConfig& config,
                               const GraphPyramid* fixed_topology) {
  Tape* tape = model.head.weight.tape();
  if (tape == nullptr) throw ContractError("forward_pipeline: model is not bound to a tape");
  if (sample.image.height() != config.image_size || sample.image.width() != config.image_size) {
    throw DimensionError("forward_pipeline: image does not match config.image_size");
  }

  ForwardResult out;
  Var image = tape->constant(image_tensor(sample.image));
  out.backbone = backbone_forward(image, model.backbone);
  out.pyramid = fpn_forward(out.backbone, model.fpn);
  Var finest = out.pyramid[0];

  const AblationFlags& flags = config.ablation;
  if (flags.graphfpn) {
    if (!sample.graph) throw ContractError("forward_pipeline: sample was prepared without a graph");
    std::vector<Var> initial;
    for (std::size_t l = 0; l < kPyramidLevels; ++l) {
      initial.push_back(cnn_to_gnn(out.backbone[l], sample.cells[l], model.bridge[l]));
    }
    Var h0 = ops::concat_rows(initial);
    if (fixed_topology && fixed_topology->node_count() != h0.shape()[0]) {
      throw ContractError("forward_pipeline: fixed topology does not match the sample graph");
    }
    out.pruned = fixed_topology ? *fixed_topology : prune_hierarchical(*sample.graph, h0.value(), flags.prune_rule);
    const GraphPyramid& graph = *out.pruned;
    out.nodes = run_graphfpn(h0, graph, config.schedule, model.gnn, flags.attention, flags.groups);
    for (std::size_t l = 0; l < kPyramidLevels; ++l) {
      std::vector<std::size_t> rows(graph.level_size[l]);
      for (std::size_t k = 0; k < rows.size(); ++k) rows[k] = graph.level_offset[l] + k;
      Var level_nodes = ops::gather_rows(out.nodes, rows);
      out.fused.push_back(gnn_to_cnn(level_nodes, sample.cells[l], out.pyramid[l], model.bridge[l]));
    }
    finest = out.fused[0];
  }

  Var features = superpixel_means(finest, sample.cells[0]);
  out.logits = ops::add_bias(ops::linear(features, model.head.weight), model.head.bias);
  return out;
}

Var sample_loss(const ModelVars& model, const PreparedSample& sample, const TrainConfig& config) {
  return ops::cross_entropy(forward_pipeline(model, sample, config).logits, sample.region_labels);
}

}  // namespace gfpn
