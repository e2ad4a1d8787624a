#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gfpn/numerics/grad_check.hpp"

namespace gfpn {

enum class GradCheckLevel {
  kMicro,  // every differentiable primitive
  kLayer,  // attention mechanisms, GNN layers, bridge mappings, backbone, FPN
  kFull,   // end-to-end pipeline loss at the micro configuration
};

struct GradCheckCase {
  std::string name;
  GradCheckResult result;
};

/// Finite-difference checks over every coordinate of every input. Outputs
/// are reduced to a scalar with a fixed non-uniform weight pattern.
std::vector<GradCheckCase> run_gradcheck_suite(GradCheckLevel level, std::uint64_t seed = 0);

}  // namespace gfpn
