#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "gfpn/numerics/tensor.hpp"

namespace gfpn {

struct AdamOptions {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;  // L2 term added to the gradient
  double clip_norm = 0.0;     // global gradient norm cap; 0 disables
};

/// Adam with bias correction. The loss gradient is clipped to clip_norm
/// first, then weight_decay * p is added.
class Adam {
 public:
  explicit Adam(AdamOptions options) : options_(options) {}

  /// Replaces every *params[i] with its updated value. grads[i] must have
  /// params[i]->size() entries. Returns the gradient norm before clipping.
  double step(std::span<Tensor* const> params, const std::vector<std::vector<double>>& grads);

  std::size_t steps() const { return steps_; }
  const AdamOptions& options() const { return options_; }

 private:
  AdamOptions options_;
  std::size_t steps_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

}  // namespace gfpn
