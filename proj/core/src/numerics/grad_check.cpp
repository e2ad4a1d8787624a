#include "gfpn/numerics/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace gfpn {
namespace {

std::vector<Var> bind(Tape& tape, const std::vector<Tensor>& params) {
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (const auto& p : params) vars.push_back(tape.leaf(p.with_requires_grad(true)));
  return vars;
}

Tensor perturbed(const Tensor& t, std::size_t index, double delta) {
  std::vector<double> data(t.data().begin(), t.data().end());
  data[index] += delta;
  return Tensor(t.shape(), std::move(data));
}

}  // namespace

double evaluate(const ScalarFunction& f, const std::vector<Tensor>& params) {
  Tape tape;
  const auto vars = bind(tape, params);
  return f(tape, vars).value().item();
}

GradCheckResult grad_check(const ScalarFunction& f, const std::vector<Tensor>& params,
                           const GradCheckOptions& options) {
  std::vector<Tensor> analytic;
  {
    Tape tape;
    const auto vars = bind(tape, params);
    Var loss = f(tape, vars);
    tape.backward(loss);
    for (const auto& v : vars) analytic.push_back(tape.grad(v));
  }

  std::mt19937_64 rng(options.seed);
  GradCheckResult result;
  std::vector<Tensor> work = params;
  for (std::size_t p = 0; p < params.size(); ++p) {
    std::vector<std::size_t> coords(params[p].size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (options.max_coords_per_param && coords.size() > options.max_coords_per_param) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(options.max_coords_per_param);
      std::sort(coords.begin(), coords.end());
    }
    for (auto i : coords) {
      work[p] = perturbed(params[p], i, options.step);
      const double plus = evaluate(f, work);
      work[p] = perturbed(params[p], i, -options.step);
      const double minus = evaluate(f, work);
      work[p] = params[p];

      const double numeric = (plus - minus) / (2.0 * options.step);
      const double a = analytic[p][i];
      const double err =
          std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      ++result.coordinates_checked;
      if (err > result.max_rel_error || result.coordinates_checked == 1) {
        result.max_rel_error = err;
        result.worst_param = p;
        result.worst_index = i;
        result.worst_analytic = a;
        result.worst_numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace gfpn
