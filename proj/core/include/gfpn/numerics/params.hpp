#pragma once

#include <string>
#include <vector>

#include "gfpn/numerics/tape.hpp"

namespace gfpn {

// Parameter groups are templates over the storage type: P<Tensor> holds
// values, P<Var> the leaves bound on a tape. Each group exposes
//
//   template <class Self, class F> static void fields(Self& self, F&& f);
//
// which calls f(name, member) for every member in a fixed order.

/// Binds every member of a parameter group as a tape leaf. With
/// track_gradients false the leaves are constants.
template <template <class> class P>
P<Var> bind(Tape& tape, const P<Tensor>& params, bool track_gradients = true) {
  std::vector<const Tensor*> values;
  P<Tensor>::fields(params, [&](const char*, const Tensor& t) { values.push_back(&t); });
  P<Var> out;
  std::size_t i = 0;
  P<Var>::fields(out, [&](const char*, Var& v) {
    const Tensor& t = *values[i++];
    v = track_gradients ? tape.leaf(t.with_requires_grad(true)) : tape.constant(t);
  });
  return out;
}

template <template <class> class P>
std::vector<P<Var>> bind(Tape& tape, const std::vector<P<Tensor>>& params, bool track_gradients = true) {
  std::vector<P<Var>> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back(bind(tape, p, track_gradients));
  return out;
}

}  // namespace gfpn
