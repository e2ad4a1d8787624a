#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "gfpn/numerics/tensor.hpp"

namespace gfpn {

class Tape;

/// Handle to a value recorded on a Tape.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
  bool valid() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Records primitive operations in execution order for reverse-mode
/// differentiation. One tape per thread; Vars hold a pointer to their tape, so
/// a Tape is neither copyable nor movable.
class Tape {
 public:
  using GradBuffer = std::vector<double>;
  /// Receives dLoss/dOutput and one buffer per parent (nullptr when that
  /// parent does not need a gradient). Must accumulate with +=.
  using BackwardFn =
      std::function<void(std::span<const double> grad_out, std::span<GradBuffer* const> grad_in)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Input whose gradient is tracked iff value.requires_grad().
  Var leaf(Tensor value);
  /// Input that never receives a gradient.
  Var constant(Tensor value);
  Var record(Tensor value, std::vector<Var> parents, BackwardFn backward);

  /// Reverse sweep from a scalar loss. Gradients of earlier sweeps are
  /// discarded first.
  void backward(Var loss);
  /// dLoss/dv after backward(); zeros when v is unreachable from the loss.
  Tensor grad(Var v) const;

  /// Drops all records so the tape can hold a fresh forward pass.
  void reset();
  std::size_t size() const { return nodes_.size(); }
  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

 private:
  struct Node {
    Tensor value;
    std::vector<std::size_t> parents;
    BackwardFn backward;
    bool requires_grad = false;
  };

  std::vector<Node> nodes_;
  std::vector<GradBuffer> grads_;
};

}  // namespace gfpn
