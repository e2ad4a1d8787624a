#include "gfpn/numerics/init.hpp"

#include <cmath>
#include <vector>

namespace gfpn {

Tensor xavier_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  return uniform(std::move(shape), -bound, bound, rng).with_requires_grad(true);
}

Tensor uniform(Shape shape, double lo, double hi, Rng& rng) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> data(shape_numel(shape));
  for (auto& v : data) v = dist(rng);
  return Tensor(std::move(shape), std::move(data));
}

}  // namespace gfpn
