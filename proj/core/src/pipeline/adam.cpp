#include "gfpn/pipeline/adam.hpp"

#include <cmath>

#include "gfpn/errors.hpp"

namespace gfpn {

double Adam::step(std::span<Tensor* const> params, const std::vector<std::vector<double>>& grads) {
  if (grads.size() != params.size()) throw ContractError("Adam::step: one gradient per parameter");
  if (m_.empty()) {
    for (auto* p : params) {
      m_.emplace_back(p->size(), 0.0);
      v_.emplace_back(p->size(), 0.0);
    }
  }
  if (m_.size() != params.size()) throw ContractError("Adam::step: parameter list changed between steps");

  double sq = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].size() != params[i]->size() || m_[i].size() != params[i]->size()) {
      throw DimensionError("Adam::step: gradient size mismatch");
    }
    for (double g : grads[i]) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  const double clip = options_.clip_norm > 0.0 && norm > options_.clip_norm ? options_.clip_norm / norm : 1.0;

  ++steps_;
  const double t = static_cast<double>(steps_);
  const double c1 = 1.0 - std::pow(options_.beta1, t);
  const double c2 = 1.0 - std::pow(options_.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto data = params[i]->data();
    std::vector<double> next(data.begin(), data.end());
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t k = 0; k < next.size(); ++k) {
      const double g = grads[i][k] * clip + options_.weight_decay * next[k];
      m[k] = options_.beta1 * m[k] + (1.0 - options_.beta1) * g;
      v[k] = options_.beta2 * v[k] + (1.0 - options_.beta2) * g * g;
      next[k] -= options_.learning_rate * (m[k] / c1) / (std::sqrt(v[k] / c2) + options_.epsilon);
    }
    *params[i] = Tensor(params[i]->shape(), std::move(next), params[i]->requires_grad());
  }
  return norm;
}

}  // namespace gfpn
