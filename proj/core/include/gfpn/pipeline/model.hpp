#pragma once

#include <optional>
#include <string>
#include <type_traits>
#include <vector>

#include "gfpn/backbone/backbone.hpp"
#include "gfpn/bridge/bridge.hpp"
#include "gfpn/gnn/graphfpn.hpp"
#include "gfpn/pipeline/config.hpp"
#include "gfpn/pipeline/dataset.hpp"

namespace gfpn {

template <class T>
struct HeadParamsT {
  T weight;  // [K + 1, D_p]
  T bias;    // [K + 1]

  template <class Self, class F>
  static void fields(Self& self, F&& f) {
    f("weight", self.weight);
    f("bias", self.bias);
  }
};

/// Every learnable tensor of the pipeline. All groups exist regardless of
/// the ablation flags so that checkpoints share one layout.
template <class T>
struct ModelT {
  std::vector<ConvStageParamsT<T>> backbone;
  std::vector<FpnLevelParamsT<T>> fpn;
  std::vector<BridgeLevelParamsT<T>> bridge;
  std::vector<GnnLayerParamsT<T>> gnn;
  HeadParamsT<T> head;
};
using ModelParams = ModelT<Tensor>;
using ModelVars = ModelT<Var>;

/// Calls f(name, member) for every parameter in a fixed order, e.g.
/// "backbone.stage1.conv1", "gnn.layer4.beta", "head.weight".
template <class Model, class F>
void for_each_param(Model& model, F&& f) {
  auto seq = [&](const std::string& base, const char* item, auto& groups) {
    for (std::size_t i = 0; i < groups.size(); ++i) {
      const std::string prefix = base + "." + item + std::to_string(i + 1) + ".";
      using G = std::remove_cvref_t<decltype(groups[i])>;
      G::fields(groups[i], [&](const char* name, auto& member) { f(prefix + name, member); });
    }
  };
  seq("backbone", "stage", model.backbone);
  seq("fpn", "level", model.fpn);
  seq("bridge", "level", model.bridge);
  seq("gnn", "layer", model.gnn);
  using H = std::remove_cvref_t<decltype(model.head)>;
  H::fields(model.head, [&](const char* name, auto& member) { f(std::string("head.") + name, member); });
}

/// Initialises backbone, FPN, bridge, GNN and head in that order.
ModelParams init_model(const TrainConfig& config, Rng& rng);
ModelVars bind_model(Tape& tape, const ModelParams& params, bool track_gradients = true);

std::size_t parameter_count(const ModelParams& params);

/// Parameters in for_each_param order, and the inverse for Vars.
std::vector<Tensor> flatten(const ModelParams& params);
ModelVars assemble_vars(const ModelParams& layout, std::span<const Var> flat);

struct ForwardResult {
  Var logits;                  // [count(level 1), K + 1]
  std::vector<Var> backbone;   // C^1..C^5
  std::vector<Var> pyramid;    // P^1..P^5
  std::vector<Var> fused;      // fused pyramid; empty for the FPN-only baseline
  Var nodes;                   // final node features; invalid for the baseline
  std::optional<GraphPyramid> pruned;  // graph after pruning; empty for the baseline
};

/// Image -> backbone -> FPN -> (graph branch) -> mean over owned level-1
/// cells -> linear classifier. The graph branch runs only when
/// config.ablation.graphfpn is set and then requires sample.graph. Pruning is
/// a discrete function of the initial node features; pass fixed_topology to
/// reuse an earlier pruned graph (for finite-difference checks).
ForwardResult forward_pipeline(const ModelVars& model, const PreparedSample& sample, const TrainConfig& config,
                               const GraphPyramid* fixed_topology = nullptr);

/// Mean softmax cross-entropy over the level-1 superpixels of one sample.
Var sample_loss(const ModelVars& model, const PreparedSample& sample, const TrainConfig& config);

}  // namespace gfpn
