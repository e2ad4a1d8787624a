#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "gfpn/graph/graph_pyramid.hpp"
#include "gfpn/numerics/init.hpp"
#include "gfpn/numerics/ops.hpp"
#include "gfpn/numerics/params.hpp"

namespace gfpn {

/// Learnable state of one contextual or hierarchical layer.
template <class T>
struct GnnLayerParamsT {
  T weight;     // [D, D] projection shared by the spatial attention logits and messages
  T attention;  // [2D] logit vector over [W h_i || W h_j]
  T gate;       // [D, D] channel-wise gate
  T beta;       // scalar residual weight of channel self-attention

  template <class Self, class F>
  static void fields(Self& self, F&& f) {
    f("weight", self.weight);
    f("attention", self.attention);
    f("gate", self.gate);
    f("beta", self.beta);
  }
};
using GnnLayerParams = GnnLayerParamsT<Tensor>;
using GnnLayerVars = GnnLayerParamsT<Var>;

/// Xavier-uniform weight, attention and gate; beta = 0.
GnnLayerParams init_gnn_layer(std::size_t dim, Rng& rng);

/// Node i together with its neighbours, flattened: slot s belongs to centre
/// node `center[s]` and reads node `member[s]`. Each centre's slots are
/// contiguous, sorted by member id, and include the node itself.
struct Neighborhoods {
  std::vector<std::size_t> center;
  std::vector<std::size_t> member;
  SegmentIndex groups;

  std::size_t node_count() const { return groups.group_count(); }
};

Neighborhoods make_neighborhoods(std::size_t node_count,
                                 std::span<const std::pair<std::size_t, std::size_t>> edges);

/// Attention coefficient per neighbourhood slot: softmax over j in {i} u N_i
/// of LeakyReLU_0.2(a . [W h_i || W h_j]).
Var spatial_attention_coefficients(Var h, const Neighborhoods& nb, const GnnLayerVars& p);
/// h'_i = sum_j alpha_ij W h_j.
Var spatial_attention(Var h, const Neighborhoods& nb, const GnnLayerVars& p);
/// h''_i = sigmoid(W1 mean_{j in {i} u N_i} h'_j) * h'_i.
Var channel_wise_attention(Var h, const Neighborhoods& nb, const GnnLayerVars& p);
/// X_i = softmax_rows(A_i^T A_i) with A_i the stacked neighbourhood features;
/// result [N, D, D].
Var channel_similarity(Var h, const Neighborhoods& nb);
/// h'''_i = beta X_i h''_i + h''_i.
Var channel_self_attention(Var h, const Neighborhoods& nb, const GnnLayerVars& p);

struct AttentionToggles {
  bool spatial = true;       // SA
  bool channel_wise = true;  // LCA
  bool channel_self = true;  // LSA
};

/// spatial -> channel-wise -> channel self-attention; a disabled stage passes
/// its input through.
Var gnn_layer(Var h, const Neighborhoods& nb, const GnnLayerVars& p,
              const AttentionToggles& toggles = {});

struct LayerSchedule {
  std::size_t contextual_before = 3;  // CGL-1
  std::size_t hierarchical = 3;       // HGL
  std::size_t contextual_after = 3;   // CGL-2

  std::size_t total() const { return contextual_before + hierarchical + contextual_after; }
};

struct GroupToggles {
  bool contextual_before = true;
  bool hierarchical = true;
  bool contextual_after = true;
};

/// One independent parameter set per layer, in execution order.
std::vector<GnnLayerParams> init_graphfpn(const LayerSchedule& schedule, std::size_t dim, Rng& rng);

/// Contextual layers, then hierarchical layers over the surviving
/// hierarchical edges, then contextual layers. h0 is [node_count, D].
Var run_graphfpn(Var h0, const GraphPyramid& graph, const LayerSchedule& schedule,
                 std::span<const GnnLayerVars> layers, const AttentionToggles& attention = {},
                 const GroupToggles& groups = {});

}  // namespace gfpn
