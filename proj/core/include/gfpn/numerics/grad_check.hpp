#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "gfpn/numerics/tape.hpp"

namespace gfpn {

/// Builds a scalar on the given tape from parameter leaves (same order as
/// the tensors handed to grad_check).
using ScalarFunction = std::function<Var(Tape&, std::span<const Var>)>;

struct GradCheckOptions {
  double step = 1e-5;
  /// 0 checks every coordinate; otherwise a seeded random sample per tensor.
  std::size_t max_coords_per_param = 0;
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t coordinates_checked = 0;
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Compares reverse-mode gradients against central differences. The error
/// per coordinate is |analytic - numeric| / max(1, |analytic|, |numeric|).
GradCheckResult grad_check(const ScalarFunction& f, const std::vector<Tensor>& params,
                           const GradCheckOptions& options = {});

/// Forward value only.
double evaluate(const ScalarFunction& f, const std::vector<Tensor>& params);

}  // namespace gfpn
