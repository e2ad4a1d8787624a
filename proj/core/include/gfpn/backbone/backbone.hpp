#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "gfpn/numerics/init.hpp"
#include "gfpn/numerics/ops.hpp"
#include "gfpn/numerics/params.hpp"
#include "gfpn/segmentation/image.hpp"

namespace gfpn {

inline constexpr std::size_t kPyramidLevels = 5;

struct BackboneConfig {
  std::array<std::size_t, kPyramidLevels> stage_channels{16, 32, 64, 96, 128};
  std::size_t fpn_channels = 32;
  std::size_t input_size = 64;

  /// Stage 1 keeps the input resolution, later stages halve it.
  static constexpr std::size_t stride(std::size_t stage) { return stage == 0 ? 1 : 2; }
  std::size_t level_size(std::size_t level) const { return input_size >> level; }
};

template <class T>
struct ConvStageParamsT {
  T conv1;  // [C_out, C_in, 3, 3], strided
  T bias1;
  T conv2;  // [C_out, C_out, 3, 3]
  T bias2;

  template <class Self, class F>
  static void fields(Self& self, F&& f) {
    f("conv1", self.conv1);
    f("bias1", self.bias1);
    f("conv2", self.conv2);
    f("bias2", self.bias2);
  }
};
using ConvStageParams = ConvStageParamsT<Tensor>;
using ConvStageVars = ConvStageParamsT<Var>;

template <class T>
struct FpnLevelParamsT {
  T lateral;  // [D_p, C_i, 1, 1]
  T lateral_bias;
  T smooth;   // [D_p, D_p, 3, 3]
  T smooth_bias;

  template <class Self, class F>
  static void fields(Self& self, F&& f) {
    f("lateral", self.lateral);
    f("lateral_bias", self.lateral_bias);
    f("smooth", self.smooth);
    f("smooth_bias", self.smooth_bias);
  }
};
using FpnLevelParams = FpnLevelParamsT<Tensor>;
using FpnLevelVars = FpnLevelParamsT<Var>;

/// Xavier-uniform kernels, zero biases.
std::vector<ConvStageParams> init_backbone(const BackboneConfig& config, Rng& rng);
std::vector<FpnLevelParams> init_fpn(const BackboneConfig& config, Rng& rng);

/// Image as a [3, H, W] tensor.
Tensor image_tensor(const Image& image);

/// Five stages of conv3x3(stride) -> ReLU -> conv3x3 -> ReLU. Returns
/// C^1..C^5, finest first.
std::vector<Var> backbone_forward(Var image, std::span<const ConvStageVars> stages);

/// Top-down pathway: M^5 = lateral(C^5), M^i = lateral(C^i) + up2(M^{i+1}),
/// P^i = smooth3x3(M^i). Returns P^1..P^5.
std::vector<Var> fpn_forward(std::span<const Var> features, std::span<const FpnLevelVars> levels);

}  // namespace gfpn
