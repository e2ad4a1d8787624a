#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

#include "gfpn/backbone/backbone.hpp"
#include "gfpn/gnn/graphfpn.hpp"
#include "gfpn/graph/graph_pyramid.hpp"

namespace gfpn {

struct AblationFlags {
  AttentionToggles attention;  // SA / LCA / LSA
  GroupToggles groups;         // CGL-1 / HGL / CGL-2
  bool graphfpn = true;        // false: the head reads P^1 directly
  PruneRule prune_rule = PruneRule::kUnion;
};

struct TrainConfig {
  std::uint64_t seed = 0;
  std::size_t epochs = 4;
  std::size_t batch_size = 1;
  std::size_t train_samples = 256;
  std::size_t test_samples = 48;

  double learning_rate = 0.001;
  double weight_decay = 0.0001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double clip_norm = 10.0;

  std::size_t image_size = 64;
  std::size_t superpixels = 256;  // N, finest level
  std::size_t feature_dim = 32;   // node dimension D == FPN channels D_p
  std::array<std::size_t, kPyramidLevels> stage_channels{16, 32, 64, 96, 128};
  LayerSchedule schedule;
  std::size_t shape_classes = 3;  // K; logits have K + 1 columns
  AblationFlags ablation;

  BackboneConfig backbone() const { return {stage_channels, feature_dim, image_size}; }
  /// Throws ContractError on inconsistent settings.
  void validate() const;
};

std::string config_to_json(const TrainConfig& config);
/// Missing keys keep their defaults; unknown keys are rejected.
TrainConfig config_from_json(std::string_view text);
TrainConfig load_config_file(const std::string& path);
/// Applies GFPN_SEED from the environment, if set.
void apply_environment(TrainConfig& config);

/// 16x16 image, N = 16, D = 8, one layer per group, tiny backbone.
TrainConfig micro_config();

}  // namespace gfpn
