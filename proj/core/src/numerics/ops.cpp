#include "gfpn/numerics/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "gfpn/errors.hpp"

namespace gfpn::ops {
namespace {

Tape& tape_of(std::initializer_list<Var> vars) {
  Tape* t = nullptr;
  for (const auto& v : vars) {
    if (!v.valid()) throw ContractError("operation on an unbound Var");
    if (t && v.tape() != t) throw ContractError("operands live on different tapes");
    t = v.tape();
  }
  return *t;
}

[[noreturn]] void shape_mismatch(const char* op, const Shape& a, const Shape& b) {
  throw DimensionError(std::string(op) + ": incompatible shapes " + shape_string(a) + " and " +
                       shape_string(b));
}

void require_rank(const char* op, const Var& x, std::size_t rank) {
  if (x.shape().size() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         " tensor, got " + shape_string(x.shape()));
  }
}

enum class Broadcast { kSame, kLeftScalar, kRightScalar };

Broadcast broadcast_kind(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) return Broadcast::kSame;
  if (a.size() == 1) return Broadcast::kLeftScalar;
  if (b.size() == 1) return Broadcast::kRightScalar;
  shape_mismatch(op, a.shape(), b.shape());
}

template <class F, class D>
Var unary(Var x, F f, D dfdx) {
  Tape& tape = tape_of({x});
  const auto in = x.value().data();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
  Tensor result(x.shape(), std::move(out));
  Tensor saved_in = x.value();
  Tensor saved_out = result;
  return tape.record(std::move(result), {x},
                     [saved_in, saved_out, dfdx](auto g, auto grads) {
                       auto& gx = *grads[0];
                       for (std::size_t i = 0; i < g.size(); ++i) {
                         gx[i] += g[i] * dfdx(saved_in[i], saved_out[i]);
                       }
                     });
}

}  // namespace

Var add(Var a, Var b) {
  Tape& tape = tape_of({a, b});
  const auto kind = broadcast_kind("add", a.value(), b.value());
  const auto& big = kind == Broadcast::kLeftScalar ? b.value() : a.value();
  const auto x = a.value().data();
  const auto y = b.value().data();
  std::vector<double> out(big.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double xi = kind == Broadcast::kLeftScalar ? x[0] : x[i];
    const double yi = kind == Broadcast::kRightScalar ? y[0] : y[i];
    out[i] = xi + yi;
  }
  return tape.record(Tensor(big.shape(), std::move(out)), {a, b}, [kind](auto g, auto grads) {
    if (auto* ga = grads[0]) {
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[kind == Broadcast::kLeftScalar ? 0 : i] += g[i];
    }
    if (auto* gb = grads[1]) {
      for (std::size_t i = 0; i < g.size(); ++i) (*gb)[kind == Broadcast::kRightScalar ? 0 : i] += g[i];
    }
  });
}

Var sub(Var a, Var b) { return add(a, scale(b, -1.0)); }

Var mul(Var a, Var b) {
  Tape& tape = tape_of({a, b});
  const auto kind = broadcast_kind("mul", a.value(), b.value());
  const Tensor av = a.value();
  const Tensor bv = b.value();
  const auto& big = kind == Broadcast::kLeftScalar ? bv : av;
  std::vector<double> out(big.size());
  auto ai = [kind, &av](std::size_t i) { return kind == Broadcast::kLeftScalar ? av[0] : av[i]; };
  auto bi = [kind, &bv](std::size_t i) { return kind == Broadcast::kRightScalar ? bv[0] : bv[i]; };
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ai(i) * bi(i);
  return tape.record(Tensor(big.shape(), std::move(out)), {a, b},
                     [kind, av, bv](auto g, auto grads) {
                       const bool ls = kind == Broadcast::kLeftScalar;
                       const bool rs = kind == Broadcast::kRightScalar;
                       if (auto* ga = grads[0]) {
                         for (std::size_t i = 0; i < g.size(); ++i)
                           (*ga)[ls ? 0 : i] += g[i] * bv[rs ? 0 : i];
                       }
                       if (auto* gb = grads[1]) {
                         for (std::size_t i = 0; i < g.size(); ++i)
                           (*gb)[rs ? 0 : i] += g[i] * av[ls ? 0 : i];
                       }
                     });
}

Var scale(Var a, double factor) {
  return unary(
      a, [factor](double v) { return v * factor; },
      [factor](double, double) { return factor; });
}

Var sigmoid(Var x) {
  return unary(
      x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
      [](double, double y) { return y * (1.0 - y); });
}

Var relu(Var x) {
  return unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Var leaky_relu(Var x, double negative_slope) {
  return unary(
      x, [negative_slope](double v) { return v > 0.0 ? v : negative_slope * v; },
      [negative_slope](double v, double) {
        return v > 0.0 ? 1.0 : (v < 0.0 ? negative_slope : 0.0);
      });
}

Var concat(Var a, Var b) {
  Tape& tape = tape_of({a, b});
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.empty() || sb.empty() || sa.size() != sb.size() ||
      !std::equal(sa.begin(), sa.end() - 1, sb.begin())) {
    shape_mismatch("concat", sa, sb);
  }
  const std::size_t ka = sa.back();
  const std::size_t kb = sb.back();
  const std::size_t rows = ka ? a.value().size() / ka : (kb ? b.value().size() / kb : 0);
  Shape out_shape = sa;
  out_shape.back() = ka + kb;
  std::vector<double> out(rows * (ka + kb));
  const auto x = a.value().data();
  const auto y = b.value().data();
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(x.begin() + r * ka, ka, out.begin() + r * (ka + kb));
    std::copy_n(y.begin() + r * kb, kb, out.begin() + r * (ka + kb) + ka);
  }
  return tape.record(Tensor(out_shape, std::move(out)), {a, b},
                     [rows, ka, kb](auto g, auto grads) {
                       for (std::size_t r = 0; r < rows; ++r) {
                         if (auto* ga = grads[0])
                           for (std::size_t k = 0; k < ka; ++k) (*ga)[r * ka + k] += g[r * (ka + kb) + k];
                         if (auto* gb = grads[1])
                           for (std::size_t k = 0; k < kb; ++k)
                             (*gb)[r * kb + k] += g[r * (ka + kb) + ka + k];
                       }
                     });
}

Var slice_last(Var x, std::size_t begin, std::size_t end) {
  Tape& tape = tape_of({x});
  const Shape& s = x.shape();
  if (s.empty() || begin > end || end > s.back()) {
    throw DimensionError("slice_last: range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") invalid for shape " + shape_string(s));
  }
  const std::size_t k = s.back();
  const std::size_t w = end - begin;
  const std::size_t rows = k ? x.value().size() / k : 0;
  Shape out_shape = s;
  out_shape.back() = w;
  std::vector<double> out(rows * w);
  const auto in = x.value().data();
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(in.begin() + r * k + begin, w, out.begin() + r * w);
  return tape.record(Tensor(out_shape, std::move(out)), {x}, [rows, k, w, begin](auto g, auto grads) {
    auto& gx = *grads[0];
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < w; ++j) gx[r * k + begin + j] += g[r * w + j];
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat_rows: no operands");
  Tape& tape = tape_of({parts[0]});
  const Shape& first = parts[0].shape();
  if (first.empty()) throw DimensionError("concat_rows: scalar operand");
  Shape out_shape = first;
  out_shape[0] = 0;
  std::vector<double> out;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    tape_of({parts[0], p});
    const Shape& s = p.shape();
    if (s.size() != first.size() || !std::equal(s.begin() + 1, s.end(), first.begin() + 1)) {
      shape_mismatch("concat_rows", first, s);
    }
    out_shape[0] += s[0];
    offsets.push_back(out.size());
    out.insert(out.end(), p.value().data().begin(), p.value().data().end());
  }
  offsets.push_back(out.size());
  std::vector<Var> parents(parts.begin(), parts.end());
  return tape.record(Tensor(out_shape, std::move(out)), std::move(parents),
                     [offsets](auto g, auto grads) {
                       for (std::size_t p = 0; p < grads.size(); ++p) {
                         if (auto* gp = grads[p]) {
                           for (std::size_t i = offsets[p]; i < offsets[p + 1]; ++i)
                             (*gp)[i - offsets[p]] += g[i];
                         }
                       }
                     });
}

Var reshape(Var x, Shape shape) {
  Tape& tape = tape_of({x});
  return tape.record(x.value().reshaped(std::move(shape)), {x}, [](auto g, auto grads) {
    auto& gx = *grads[0];
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

Var linear(Var x, Var weight) {
  Tape& tape = tape_of({x, weight});
  const Shape& sx = x.shape();
  const Shape& sw = weight.shape();
  if (sx.empty() || sw.size() != 2 || sx.back() != sw[1]) {
    throw DimensionError("linear: inner dimensions disagree between x " + shape_string(sx) +
                         " and W " + shape_string(sw));
  }
  const std::size_t k = sw[1];
  const std::size_t m = sw[0];
  const std::size_t rows = k ? x.value().size() / k : 0;
  Shape out_shape = sx;
  out_shape.back() = m;
  const Tensor xv = x.value();
  const Tensor wv = weight.value();
  const double* xd = xv.data().data();
  const double* wd = wv.data().data();
  std::vector<double> out(rows * m);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = xd + r * k;
    for (std::size_t j = 0; j < m; ++j) {
      const double* wr = wd + j * k;
      double acc = 0.0;
      for (std::size_t i = 0; i < k; ++i) acc += xr[i] * wr[i];
      out[r * m + j] = acc;
    }
  }
  return tape.record(Tensor(out_shape, std::move(out)), {x, weight},
                     [xv, wv, rows, k, m](auto g, auto grads) {
                       const double* xd = xv.data().data();
                       const double* wd = wv.data().data();
                       if (auto* gx = grads[0]) {
                         for (std::size_t r = 0; r < rows; ++r) {
                           double* gxr = gx->data() + r * k;
                           for (std::size_t j = 0; j < m; ++j) {
                             const double gj = g[r * m + j];
                             const double* wr = wd + j * k;
                             for (std::size_t i = 0; i < k; ++i) gxr[i] += gj * wr[i];
                           }
                         }
                       }
                       if (auto* gw = grads[1]) {
                         for (std::size_t r = 0; r < rows; ++r) {
                           const double* xr = xd + r * k;
                           for (std::size_t j = 0; j < m; ++j) {
                             const double gj = g[r * m + j];
                             double* gwr = gw->data() + j * k;
                             for (std::size_t i = 0; i < k; ++i) gwr[i] += gj * xr[i];
                           }
                         }
                       }
                     });
}

Var add_bias(Var x, Var bias) {
  Tape& tape = tape_of({x, bias});
  require_rank("add_bias", x, 2);
  const std::size_t rows = x.shape()[0];
  const std::size_t m = x.shape()[1];
  if (bias.value().size() != m) shape_mismatch("add_bias", x.shape(), bias.shape());
  const auto in = x.value().data();
  const auto b = bias.value().data();
  std::vector<double> out(rows * m);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < m; ++j) out[r * m + j] = in[r * m + j] + b[j];
  return tape.record(Tensor(x.shape(), std::move(out)), {x, bias}, [rows, m](auto g, auto grads) {
    if (auto* gx = grads[0])
      for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i];
    if (auto* gb = grads[1])
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < m; ++j) (*gb)[j] += g[r * m + j];
  });
}

namespace {

// Softmax of each contiguous run [offsets[g], offsets[g+1]) of `in`.
void softmax_runs(std::span<const double> in, std::span<double> out,
                  const auto& run_begin, const auto& run_end, std::size_t runs) {
  for (std::size_t g = 0; g < runs; ++g) {
    const std::size_t b = run_begin(g);
    const std::size_t e = run_end(g);
    if (b == e) continue;
    double mx = in[b];
    for (std::size_t i = b + 1; i < e; ++i) mx = std::max(mx, in[i]);
    double total = 0.0;
    for (std::size_t i = b; i < e; ++i) {
      out[i] = std::exp(in[i] - mx);
      total += out[i];
    }
    for (std::size_t i = b; i < e; ++i) out[i] /= total;
  }
}

}  // namespace

Var softmax_rows(Var x) {
  Tape& tape = tape_of({x});
  require_rank("softmax_rows", x, 2);
  const std::size_t rows = x.shape()[0];
  const std::size_t cols = x.shape()[1];
  std::vector<double> out(rows * cols);
  softmax_runs(
      x.value().data(), out, [cols](std::size_t r) { return r * cols; },
      [cols](std::size_t r) { return (r + 1) * cols; }, rows);
  Tensor y(x.shape(), std::move(out));
  Tensor saved = y;
  return tape.record(std::move(y), {x}, [saved, rows, cols](auto g, auto grads) {
    auto& gx = *grads[0];
    const auto y = saved.data();
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < cols; ++c) dot += g[r * cols + c] * y[r * cols + c];
      for (std::size_t c = 0; c < cols; ++c)
        gx[r * cols + c] += y[r * cols + c] * (g[r * cols + c] - dot);
    }
  });
}

Var segment_softmax(Var x, const SegmentIndex& groups) {
  Tape& tape = tape_of({x});
  require_rank("segment_softmax", x, 1);
  const std::size_t n = x.shape()[0];
  if (groups.element_count() != n || groups.max_element_bound() > n) {
    throw ContractError("segment_softmax: groups must cover all " + std::to_string(n) + " elements");
  }
  // Gather into group order, softmax per run, scatter back.
  const auto in = x.value().data();
  std::vector<std::size_t> order;
  std::vector<std::size_t> offsets{0};
  order.reserve(n);
  for (std::size_t g = 0; g < groups.group_count(); ++g) {
    for (auto i : groups.group(g)) order.push_back(i);
    offsets.push_back(order.size());
  }
  std::vector<double> packed(n);
  for (std::size_t i = 0; i < n; ++i) packed[i] = in[order[i]];
  std::vector<double> packed_out(n);
  softmax_runs(
      packed, packed_out, [&offsets](std::size_t g) { return offsets[g]; },
      [&offsets](std::size_t g) { return offsets[g + 1]; }, groups.group_count());
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[order[i]] = packed_out[i];
  Tensor y(x.shape(), std::move(out));
  Tensor saved = y;
  return tape.record(std::move(y), {x}, [saved, order, offsets](auto g, auto grads) {
    auto& gx = *grads[0];
    const auto y = saved.data();
    for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
      double dot = 0.0;
      for (std::size_t p = offsets[s]; p < offsets[s + 1]; ++p) dot += g[order[p]] * y[order[p]];
      for (std::size_t p = offsets[s]; p < offsets[s + 1]; ++p) {
        const std::size_t i = order[p];
        gx[i] += y[i] * (g[i] - dot);
      }
    }
  });
}

Var segment_reduce(Var x, const SegmentIndex& groups, Reduce mode) {
  Tape& tape = tape_of({x});
  require_rank("segment_reduce", x, 2);
  const std::size_t n = x.shape()[0];
  const std::size_t c = x.shape()[1];
  if (groups.max_element_bound() > n) {
    throw ContractError("segment_reduce: index " + std::to_string(groups.max_element_bound() - 1) +
                        " out of range for " + std::to_string(n) + " rows");
  }
  const std::size_t ng = groups.group_count();
  for (std::size_t g = 0; g < ng; ++g) {
    if (groups.group_size(g) == 0) {
      throw EmptyGroupError("segment_reduce: group " + std::to_string(g) + " is empty");
    }
  }
  const auto in = x.value().data();
  std::vector<double> out(ng * c, 0.0);
  std::vector<std::size_t> arg;  // winning row for max/min
  if (mode == Reduce::kMax || mode == Reduce::kMin) arg.assign(ng * c, 0);

  for (std::size_t g = 0; g < ng; ++g) {
    const auto members = groups.group(g);
    double* o = out.data() + g * c;
    switch (mode) {
      case Reduce::kSum:
      case Reduce::kMean:
        for (auto r : members)
          for (std::size_t j = 0; j < c; ++j) o[j] += in[r * c + j];
        if (mode == Reduce::kMean) {
          const double count = static_cast<double>(members.size());
          for (std::size_t j = 0; j < c; ++j) o[j] /= count;
        }
        break;
      case Reduce::kMax:
      case Reduce::kMin: {
        const bool is_max = mode == Reduce::kMax;
        for (std::size_t j = 0; j < c; ++j) {
          std::size_t best = members[0];
          double v = in[best * c + j];
          for (std::size_t p = 1; p < members.size(); ++p) {
            const double cand = in[members[p] * c + j];
            if (is_max ? cand > v : cand < v) {
              v = cand;
              best = members[p];
            }
          }
          o[j] = v;
          arg[g * c + j] = best;
        }
        break;
      }
    }
  }
  Shape out_shape{ng, c};
  return tape.record(Tensor(out_shape, std::move(out)), {x},
                     [groups, mode, arg, c](auto g, auto grads) {
                       auto& gx = *grads[0];
                       for (std::size_t s = 0; s < groups.group_count(); ++s) {
                         if (mode == Reduce::kMax || mode == Reduce::kMin) {
                           for (std::size_t j = 0; j < c; ++j) gx[arg[s * c + j] * c + j] += g[s * c + j];
                           continue;
                         }
                         const double w =
                             mode == Reduce::kMean ? 1.0 / static_cast<double>(groups.group_size(s)) : 1.0;
                         for (auto r : groups.group(s))
                           for (std::size_t j = 0; j < c; ++j) gx[r * c + j] += g[s * c + j] * w;
                       }
                     });
}

Var gather_rows(Var x, std::span<const std::size_t> rows) {
  Tape& tape = tape_of({x});
  if (x.shape().empty()) throw DimensionError("gather_rows: scalar operand");
  const std::size_t n = x.shape()[0];
  const std::size_t c = n ? x.value().size() / n : 0;
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  for (auto r : idx) {
    if (r >= n) {
      throw ContractError("gather_rows: row " + std::to_string(r) + " out of range for " +
                          std::to_string(n) + " rows");
    }
  }
  Shape out_shape = x.shape();
  out_shape[0] = idx.size();
  const auto in = x.value().data();
  std::vector<double> out(idx.size() * c);
  for (std::size_t e = 0; e < idx.size(); ++e) std::copy_n(in.begin() + idx[e] * c, c, out.begin() + e * c);
  return tape.record(Tensor(out_shape, std::move(out)), {x}, [idx, c](auto g, auto grads) {
    auto& gx = *grads[0];
    for (std::size_t e = 0; e < idx.size(); ++e)
      for (std::size_t j = 0; j < c; ++j) gx[idx[e] * c + j] += g[e * c + j];
  });
}

Var scale_rows(Var x, Var w) {
  Tape& tape = tape_of({x, w});
  require_rank("scale_rows", x, 2);
  const std::size_t e = x.shape()[0];
  const std::size_t c = x.shape()[1];
  if (w.value().size() != e) shape_mismatch("scale_rows", x.shape(), w.shape());
  const Tensor xv = x.value();
  const Tensor wv = w.value();
  std::vector<double> out(e * c);
  for (std::size_t r = 0; r < e; ++r)
    for (std::size_t j = 0; j < c; ++j) out[r * c + j] = xv[r * c + j] * wv[r];
  return tape.record(Tensor(x.shape(), std::move(out)), {x, w}, [xv, wv, e, c](auto g, auto grads) {
    if (auto* gx = grads[0])
      for (std::size_t r = 0; r < e; ++r)
        for (std::size_t j = 0; j < c; ++j) (*gx)[r * c + j] += g[r * c + j] * wv[r];
    if (auto* gw = grads[1])
      for (std::size_t r = 0; r < e; ++r) {
        double acc = 0.0;
        for (std::size_t j = 0; j < c; ++j) acc += g[r * c + j] * xv[r * c + j];
        (*gw)[r] += acc;
      }
  });
}

Var segment_gram(Var x, const SegmentIndex& groups) {
  Tape& tape = tape_of({x});
  require_rank("segment_gram", x, 2);
  const std::size_t n = x.shape()[0];
  const std::size_t c = x.shape()[1];
  if (groups.max_element_bound() > n) throw ContractError("segment_gram: index out of range");
  const std::size_t ng = groups.group_count();
  const Tensor xv = x.value();
  const double* xd = xv.data().data();
  std::vector<double> out(ng * c * c, 0.0);
  for (std::size_t g = 0; g < ng; ++g) {
    double* o = out.data() + g * c * c;
    for (auto r : groups.group(g)) {
      const double* xr = xd + r * c;
      for (std::size_t a = 0; a < c; ++a) {
        const double xa = xr[a];
        double* orow = o + a * c;
        for (std::size_t b = 0; b < c; ++b) orow[b] += xa * xr[b];
      }
    }
  }
  return tape.record(Tensor({ng, c, c}, std::move(out)), {x}, [xv, groups, c](auto g, auto grads) {
    auto& gx = *grads[0];
    const double* xd = xv.data().data();
    for (std::size_t s = 0; s < groups.group_count(); ++s) {
      const double* gg = g.data() + s * c * c;
      for (auto r : groups.group(s)) {
        const double* xr = xd + r * c;
        double* gr = gx.data() + r * c;
        for (std::size_t a = 0; a < c; ++a) {
          double acc = 0.0;
          for (std::size_t b = 0; b < c; ++b) acc += (gg[a * c + b] + gg[b * c + a]) * xr[b];
          gr[a] += acc;
        }
      }
    }
  });
}

Var batched_matvec(Var m, Var v) {
  Tape& tape = tape_of({m, v});
  require_rank("batched_matvec", m, 3);
  require_rank("batched_matvec", v, 2);
  const std::size_t ng = m.shape()[0];
  const std::size_t rows = m.shape()[1];
  const std::size_t cols = m.shape()[2];
  if (v.shape()[0] != ng || v.shape()[1] != cols) shape_mismatch("batched_matvec", m.shape(), v.shape());
  const Tensor mv = m.value();
  const Tensor vv = v.value();
  std::vector<double> out(ng * rows);
  for (std::size_t g = 0; g < ng; ++g) {
    const double* vg = vv.data().data() + g * cols;
    for (std::size_t r = 0; r < rows; ++r) {
      const double* mr = mv.data().data() + (g * rows + r) * cols;
      double acc = 0.0;
      for (std::size_t c = 0; c < cols; ++c) acc += mr[c] * vg[c];
      out[g * rows + r] = acc;
    }
  }
  return tape.record(Tensor({ng, rows}, std::move(out)), {m, v},
                     [mv, vv, ng, rows, cols](auto g, auto grads) {
                       for (std::size_t s = 0; s < ng; ++s) {
                         const double* vg = vv.data().data() + s * cols;
                         for (std::size_t r = 0; r < rows; ++r) {
                           const double go = g[s * rows + r];
                           const std::size_t base = (s * rows + r) * cols;
                           if (auto* gm = grads[0])
                             for (std::size_t c = 0; c < cols; ++c) (*gm)[base + c] += go * vg[c];
                           if (auto* gv = grads[1])
                             for (std::size_t c = 0; c < cols; ++c)
                               (*gv)[s * cols + c] += go * mv[base + c];
                         }
                       }
                     });
}

namespace {

// Output columns ox whose input column ox*stride + k - pad lies in [0, in).
std::pair<std::size_t, std::size_t> valid_range(std::size_t out, std::size_t in, std::size_t stride,
                                                std::size_t k, std::size_t pad) {
  std::size_t lo = 0;
  if (pad > k) lo = (pad - k + stride - 1) / stride;
  // ox*stride + k - pad <= in - 1
  const long long top = static_cast<long long>(in) - 1 + static_cast<long long>(pad) - static_cast<long long>(k);
  if (top < 0) return {0, 0};
  std::size_t hi = static_cast<std::size_t>(top) / stride + 1;
  hi = std::min(hi, out);
  if (lo > hi) lo = hi;
  return {lo, hi};
}

// Zero border of `pad` pixels around every channel plane.
std::vector<double> pad_planes(const double* x, std::size_t c, std::size_t h, std::size_t w, std::size_t pad) {
  if (pad == 0) return {x, x + c * h * w};
  const std::size_t hp = h + 2 * pad;
  const std::size_t wp = w + 2 * pad;
  std::vector<double> out(c * hp * wp, 0.0);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < h; ++y)
      std::copy_n(x + (ch * h + y) * w, w, out.data() + (ch * hp + y + pad) * wp + pad);
  return out;
}

constexpr std::size_t kChannelBlock = 2;
constexpr std::size_t kPixelBlock = 8;

// Kernel [cout, cin, k, k] regrouped as [cout / 2][cin][k][k][2], zero filled
// past cout, so one load feeds two output channels.
std::vector<double> pack_kernel(const double* k, std::size_t cout, std::size_t cin, std::size_t ks) {
  const std::size_t blocks = (cout + kChannelBlock - 1) / kChannelBlock;
  const std::size_t taps = cin * ks * ks;
  std::vector<double> out(blocks * taps * kChannelBlock, 0.0);
  for (std::size_t co = 0; co < cout; ++co)
    for (std::size_t t = 0; t < taps; ++t)
      out[((co / kChannelBlock) * taps + t) * kChannelBlock + co % kChannelBlock] = k[co * taps + t];
  return out;
}

// One block of two output channels over `width` consecutive output pixels
// of row oy. Every output accumulates its products in (ci, ky, kx) order
// starting from 0, exactly like the unpadded reference loop: the extra
// border terms are products with 0.
template <std::size_t Width>
void conv_strip(const double* xp, std::size_t cin, std::size_t hp, std::size_t wp, const double* kb,
                std::size_t ks, std::size_t stride, std::size_t oy, std::size_t ox, std::size_t width,
                double (&acc)[kChannelBlock][kPixelBlock]) {
  const std::size_t n = Width ? Width : width;
  for (std::size_t j = 0; j < kChannelBlock; ++j)
    for (std::size_t p = 0; p < kPixelBlock; ++p) acc[j][p] = 0.0;
  for (std::size_t ci = 0; ci < cin; ++ci) {
    const double* plane = xp + ci * hp * wp;
    for (std::size_t ky = 0; ky < ks; ++ky) {
      const double* row = plane + (oy * stride + ky) * wp + ox * stride;
      for (std::size_t kx = 0; kx < ks; ++kx) {
        const double* wt = kb + ((ci * ks + ky) * ks + kx) * kChannelBlock;
        const double* src = row + kx;
        double v[kPixelBlock];
        for (std::size_t p = 0; p < n; ++p) v[p] = src[p * stride];
        for (std::size_t j = 0; j < kChannelBlock; ++j)
          for (std::size_t p = 0; p < n; ++p) acc[j][p] += wt[j] * v[p];
      }
    }
  }
}

// Cross-correlation of an already padded input; out is [cout, oh, ow].
void conv_padded(const double* xp, std::size_t cin, std::size_t hp, std::size_t wp, const double* packed,
                 std::size_t cout, std::size_t ks, std::size_t stride, std::size_t oh, std::size_t ow,
                 double* out) {
  const std::size_t taps = cin * ks * ks;
  double acc[kChannelBlock][kPixelBlock];
  for (std::size_t cb = 0; cb * kChannelBlock < cout; ++cb) {
    const double* kb = packed + cb * taps * kChannelBlock;
    const std::size_t channels = std::min(kChannelBlock, cout - cb * kChannelBlock);
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ox += kPixelBlock) {
        const std::size_t width = std::min(kPixelBlock, ow - ox);
        if (width == kPixelBlock && stride == 1) {
          conv_strip<kPixelBlock>(xp, cin, hp, wp, kb, ks, 1, oy, ox, width, acc);
        } else {
          conv_strip<0>(xp, cin, hp, wp, kb, ks, stride, oy, ox, width, acc);
        }
        for (std::size_t j = 0; j < channels; ++j)
          std::copy_n(acc[j], width, out + ((cb * kChannelBlock + j) * oh + oy) * ow + ox);
      }
    }
  }
}

// dK[co, ci, ky, kx] += sum over output pixels of g[co] times the padded
// input at the tap's offset. Two output channels share each input load and
// even and odd columns keep separate partial sums.
template <std::size_t Ks>
void kernel_grad(const double* g, const double* xp, std::size_t cin, std::size_t cout, std::size_t oh,
                 std::size_t ow, std::size_t hp, std::size_t wp, std::size_t stride, double* gk) {
  const std::size_t even = ow - ow % 2;
  for (std::size_t co = 0; co < cout; co += 2) {
    const std::size_t channels = std::min<std::size_t>(2, cout - co);
    const double* g0base = g + co * oh * ow;
    const double* g1base = channels == 2 ? g0base + oh * ow : g0base;
    for (std::size_t ci = 0; ci < cin; ++ci)
      for (std::size_t ky = 0; ky < Ks; ++ky) {
        double acc[2][Ks][2] = {};
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const double* g0 = g0base + oy * ow;
          const double* g1 = g1base + oy * ow;
          const double* xr = xp + (ci * hp + oy * stride + ky) * wp;
          for (std::size_t ox = 0; ox < even; ox += 2)
            for (std::size_t kx = 0; kx < Ks; ++kx)
              for (std::size_t l = 0; l < 2; ++l) {
                const double xv = xr[(ox + l) * stride + kx];
                acc[0][kx][l] += g0[ox + l] * xv;
                acc[1][kx][l] += g1[ox + l] * xv;
              }
          if (even != ow) {
            for (std::size_t kx = 0; kx < Ks; ++kx) {
              const double xv = xr[even * stride + kx];
              acc[0][kx][0] += g0[even] * xv;
              acc[1][kx][0] += g1[even] * xv;
            }
          }
        }
        for (std::size_t j = 0; j < channels; ++j)
          for (std::size_t kx = 0; kx < Ks; ++kx)
            gk[(((co + j) * cin + ci) * Ks + ky) * Ks + kx] += acc[j][kx][0] + acc[j][kx][1];
      }
  }
}

}  // namespace

Var conv2d(Var x, Var kernel, std::size_t stride) {
  Tape& tape = tape_of({x, kernel});
  require_rank("conv2d", x, 3);
  require_rank("conv2d", kernel, 4);
  const std::size_t cin = x.shape()[0];
  const std::size_t h = x.shape()[1];
  const std::size_t w = x.shape()[2];
  const std::size_t cout = kernel.shape()[0];
  const std::size_t kh = kernel.shape()[2];
  const std::size_t kw = kernel.shape()[3];
  if (kernel.shape()[1] != cin) {
    throw DimensionError("conv2d: kernel expects " + std::to_string(kernel.shape()[1]) +
                         " input channels, input " + shape_string(x.shape()) + " has " +
                         std::to_string(cin));
  }
  if (kh != kw || (kh != 1 && kh != 3)) {
    throw DimensionError("conv2d: only 1x1 and 3x3 kernels are supported, got " +
                         shape_string(kernel.shape()));
  }
  if (stride == 0) throw ContractError("conv2d: stride must be positive");
  const std::size_t ks = kh;
  const std::size_t pad = ks / 2;
  const std::size_t oh = (h + 2 * pad - ks) / stride + 1;
  const std::size_t ow = (w + 2 * pad - ks) / stride + 1;
  // Room for the strided reads of the last output column and row.
  const std::size_t hp = std::max(h + 2 * pad, (oh - 1) * stride + ks);
  const std::size_t wp = std::max(w + 2 * pad, (ow - 1) * stride + ks);

  const Tensor xv = x.value();
  const Tensor kv = kernel.value();
  std::vector<double> xp(cin * hp * wp, 0.0);
  for (std::size_t ch = 0; ch < cin; ++ch)
    for (std::size_t y = 0; y < h; ++y)
      std::copy_n(xv.data().data() + (ch * h + y) * w, w, xp.data() + (ch * hp + y + pad) * wp + pad);
  std::vector<double> out(cout * oh * ow);
  conv_padded(xp.data(), cin, hp, wp, pack_kernel(kv.data().data(), cout, cin, ks).data(), cout, ks, stride,
              oh, ow, out.data());

  return tape.record(
      Tensor({cout, oh, ow}, std::move(out)), {x, kernel},
      [xp = std::move(xp), kv, cin, h, w, hp, wp, cout, ks, oh, ow, stride, pad](auto g, auto grads) {
        const double* kd = kv.data().data();
        if (auto* gk = grads[1]) {
          if (ks == 1) {
            kernel_grad<1>(g.data(), xp.data(), cin, cout, oh, ow, hp, wp, stride, gk->data());
          } else {
            kernel_grad<3>(g.data(), xp.data(), cin, cout, oh, ow, hp, wp, stride, gk->data());
          }
        }
        auto* gx = grads[0];
        if (!gx) return;
        if (stride == 1) {
          // Correlation of the padded output gradient with the transposed,
          // flipped kernel.
          std::vector<double> flipped(cin * cout * ks * ks);
          for (std::size_t co = 0; co < cout; ++co)
            for (std::size_t ci = 0; ci < cin; ++ci)
              for (std::size_t t = 0; t < ks * ks; ++t)
                flipped[(ci * cout + co) * ks * ks + (ks * ks - 1 - t)] = kd[(co * cin + ci) * ks * ks + t];
          const std::vector<double> gp = pad_planes(g.data(), cout, oh, ow, pad);
          std::vector<double> dx(cin * h * w);
          conv_padded(gp.data(), cout, oh + 2 * pad, ow + 2 * pad, pack_kernel(flipped.data(), cin, cout, ks).data(),
                      cin, ks, 1, h, w, dx.data());
          for (std::size_t i = 0; i < dx.size(); ++i) (*gx)[i] += dx[i];
          return;
        }
        for (std::size_t co = 0; co < cout; ++co) {
          const double* go = g.data() + co * oh * ow;
          for (std::size_t ci = 0; ci < cin; ++ci) {
            for (std::size_t ky = 0; ky < ks; ++ky) {
              const auto [ylo, yhi] = valid_range(oh, h, stride, ky, pad);
              for (std::size_t kx = 0; kx < ks; ++kx) {
                const auto [xlo, xhi] = valid_range(ow, w, stride, kx, pad);
                const double wt = kd[((co * cin + ci) * ks + ky) * ks + kx];
                for (std::size_t oy = ylo; oy < yhi; ++oy) {
                  const double* grow = go + oy * ow;
                  double* gxrow = gx->data() + (ci * h + oy * stride + ky - pad) * w + kx - pad;
                  for (std::size_t ox = xlo; ox < xhi; ++ox) gxrow[ox * stride] += wt * grow[ox];
                }
              }
            }
          }
        }
      });
}

Var add_channel_bias(Var x, Var bias) {
  Tape& tape = tape_of({x, bias});
  require_rank("add_channel_bias", x, 3);
  const std::size_t c = x.shape()[0];
  const std::size_t plane = x.shape()[1] * x.shape()[2];
  if (bias.value().size() != c) shape_mismatch("add_channel_bias", x.shape(), bias.shape());
  const auto in = x.value().data();
  const auto b = bias.value().data();
  std::vector<double> out(in.size());
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < plane; ++i) out[ch * plane + i] = in[ch * plane + i] + b[ch];
  return tape.record(Tensor(x.shape(), std::move(out)), {x, bias}, [c, plane](auto g, auto grads) {
    if (auto* gx = grads[0])
      for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i];
    if (auto* gb = grads[1])
      for (std::size_t ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (std::size_t i = 0; i < plane; ++i) acc += g[ch * plane + i];
        (*gb)[ch] += acc;
      }
  });
}

Var upsample2x(Var x) {
  Tape& tape = tape_of({x});
  require_rank("upsample2x", x, 3);
  const std::size_t c = x.shape()[0];
  const std::size_t h = x.shape()[1];
  const std::size_t w = x.shape()[2];
  const auto in = x.value().data();
  std::vector<double> out(c * 4 * h * w);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < 2 * h; ++y)
      for (std::size_t xx = 0; xx < 2 * w; ++xx)
        out[(ch * 2 * h + y) * 2 * w + xx] = in[(ch * h + y / 2) * w + xx / 2];
  return tape.record(Tensor({c, 2 * h, 2 * w}, std::move(out)), {x}, [c, h, w](auto g, auto grads) {
    auto& gx = *grads[0];
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t y = 0; y < 2 * h; ++y)
        for (std::size_t xx = 0; xx < 2 * w; ++xx)
          gx[(ch * h + y / 2) * w + xx / 2] += g[(ch * 2 * h + y) * 2 * w + xx];
  });
}

Var channels_to_rows(Var x) {
  Tape& tape = tape_of({x});
  require_rank("channels_to_rows", x, 3);
  const std::size_t c = x.shape()[0];
  const std::size_t plane = x.shape()[1] * x.shape()[2];
  const auto in = x.value().data();
  std::vector<double> out(c * plane);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < plane; ++i) out[i * c + ch] = in[ch * plane + i];
  return tape.record(Tensor({plane, c}, std::move(out)), {x}, [c, plane](auto g, auto grads) {
    auto& gx = *grads[0];
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t i = 0; i < plane; ++i) gx[ch * plane + i] += g[i * c + ch];
  });
}

Var rows_to_channels(Var x, std::size_t height, std::size_t width) {
  Tape& tape = tape_of({x});
  require_rank("rows_to_channels", x, 2);
  const std::size_t plane = x.shape()[0];
  const std::size_t c = x.shape()[1];
  if (plane != height * width) {
    throw DimensionError("rows_to_channels: " + shape_string(x.shape()) + " has " +
                         std::to_string(plane) + " rows, grid is " + std::to_string(height) + "x" +
                         std::to_string(width));
  }
  const auto in = x.value().data();
  std::vector<double> out(c * plane);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < plane; ++i) out[ch * plane + i] = in[i * c + ch];
  return tape.record(Tensor({c, height, width}, std::move(out)), {x}, [c, plane](auto g, auto grads) {
    auto& gx = *grads[0];
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t i = 0; i < plane; ++i) gx[i * c + ch] += g[ch * plane + i];
  });
}

Var sum(Var x) {
  Tape& tape = tape_of({x});
  double acc = 0.0;
  for (double v : x.value().data()) acc += v;
  return tape.record(Tensor::scalar(acc), {x}, [](auto g, auto grads) {
    auto& gx = *grads[0];
    for (auto& v : gx) v += g[0];
  });
}

Var cross_entropy(Var logits, std::span<const std::size_t> labels) {
  Tape& tape = tape_of({logits});
  require_rank("cross_entropy", logits, 2);
  const std::size_t rows = logits.shape()[0];
  const std::size_t k = logits.shape()[1];
  if (labels.size() != rows) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(rows) + " rows");
  }
  if (rows == 0) throw ContractError("cross_entropy: no rows");
  std::vector<std::size_t> lab(labels.begin(), labels.end());
  for (auto l : lab) {
    if (l >= k) throw ContractError("cross_entropy: label " + std::to_string(l) + " out of range");
  }
  const auto in = logits.value().data();
  std::vector<double> probs(rows * k);
  softmax_runs(
      in, probs, [k](std::size_t r) { return r * k; }, [k](std::size_t r) { return (r + 1) * k; },
      rows);
  double loss = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* z = in.data() + r * k;
    const double mx = *std::max_element(z, z + k);
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) total += std::exp(z[j] - mx);
    loss += (std::log(total) + mx) - z[lab[r]];
  }
  loss /= static_cast<double>(rows);
  return tape.record(Tensor::scalar(loss), {logits}, [probs, lab, rows, k](auto g, auto grads) {
    auto& gx = *grads[0];
    const double s = g[0] / static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < k; ++j) {
        const double target = j == lab[r] ? 1.0 : 0.0;
        gx[r * k + j] += s * (probs[r * k + j] - target);
      }
    }
  });
}

}  // namespace gfpn::ops
