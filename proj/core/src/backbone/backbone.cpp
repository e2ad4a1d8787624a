#include "gfpn/backbone/backbone.hpp"

#include "gfpn/errors.hpp"

namespace gfpn {
namespace {

Tensor conv_kernel(std::size_t out, std::size_t in, std::size_t k, Rng& rng) {
  return xavier_uniform({out, in, k, k}, in * k * k, out * k * k, rng);
}

Tensor zero_bias(std::size_t n) { return Tensor::zeros({n}, true); }

}  // namespace

std::vector<ConvStageParams> init_backbone(const BackboneConfig& config, Rng& rng) {
  std::vector<ConvStageParams> stages;
  std::size_t in = 3;
  for (auto out : config.stage_channels) {
    ConvStageParams s;
    s.conv1 = conv_kernel(out, in, 3, rng);
    s.bias1 = zero_bias(out);
    s.conv2 = conv_kernel(out, out, 3, rng);
    s.bias2 = zero_bias(out);
    stages.push_back(std::move(s));
    in = out;
  }
  return stages;
}

std::vector<FpnLevelParams> init_fpn(const BackboneConfig& config, Rng& rng) {
  std::vector<FpnLevelParams> levels;
  const std::size_t d = config.fpn_channels;
  for (auto c : config.stage_channels) {
    FpnLevelParams p;
    p.lateral = conv_kernel(d, c, 1, rng);
    p.lateral_bias = zero_bias(d);
    p.smooth = conv_kernel(d, d, 3, rng);
    p.smooth_bias = zero_bias(d);
    levels.push_back(std::move(p));
  }
  return levels;
}

Tensor image_tensor(const Image& image) {
  const std::size_t h = image.height();
  const std::size_t w = image.width();
  std::vector<double> data(3 * h * w);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) data[(c * h + y) * w + x] = image.at(y, x, c);
  return Tensor({3, h, w}, std::move(data));
}

std::vector<Var> backbone_forward(Var image, std::span<const ConvStageVars> stages) {
  if (stages.size() != kPyramidLevels) {
    throw ContractError("backbone_forward: expected 5 stages, got " + std::to_string(stages.size()));
  }
  std::vector<Var> features;
  Var x = image;
  for (std::size_t s = 0; s < stages.size(); ++s) {
    const auto& p = stages[s];
    x = ops::relu(ops::add_channel_bias(ops::conv2d(x, p.conv1, BackboneConfig::stride(s)), p.bias1));
    x = ops::relu(ops::add_channel_bias(ops::conv2d(x, p.conv2, 1), p.bias2));
    features.push_back(x);
  }
  return features;
}

std::vector<Var> fpn_forward(std::span<const Var> features, std::span<const FpnLevelVars> levels) {
  if (features.size() != kPyramidLevels || levels.size() != kPyramidLevels) {
    throw ContractError("fpn_forward: expected 5 levels");
  }
  std::vector<Var> out(kPyramidLevels);
  Var merged;
  for (std::size_t i = kPyramidLevels; i-- > 0;) {
    const auto& p = levels[i];
    Var lateral = ops::add_channel_bias(ops::conv2d(features[i], p.lateral, 1), p.lateral_bias);
    merged = merged.valid() ? ops::add(lateral, ops::upsample2x(merged)) : lateral;
    out[i] = ops::add_channel_bias(ops::conv2d(merged, p.smooth, 1), p.smooth_bias);
  }
  return out;
}

}  // namespace gfpn
