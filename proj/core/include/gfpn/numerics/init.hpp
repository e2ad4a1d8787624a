#pragma once

#include <cstddef>
#include <random>

#include "gfpn/numerics/tensor.hpp"

namespace gfpn {

using Rng = std::mt19937_64;

/// Glorot/Xavier uniform: U(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
/// Parameters come back with requires_grad set.
Tensor xavier_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng);

/// Uniform noise in [lo, hi), mostly for tests and micro configurations.
Tensor uniform(Shape shape, double lo, double hi, Rng& rng);

}  // namespace gfpn
