#include "gfpn/numerics/tape.hpp"

#include "gfpn/errors.hpp"

namespace gfpn {

const Tensor& Var::value() const {
  if (!tape_) throw ContractError("access to an unbound Var");
  return tape_->value(id_);
}

bool Var::requires_grad() const { return tape_ && tape_->requires_grad(id_); }

Var Tape::leaf(Tensor value) {
  const bool rg = value.requires_grad();
  nodes_.push_back(Node{std::move(value), {}, {}, rg});
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{value.with_requires_grad(false), {}, {}, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::vector<Var> parents, BackwardFn backward) {
  Node node;
  node.value = std::move(value);
  node.parents.reserve(parents.size());
  for (const auto& p : parents) {
    if (p.tape() != this) throw ContractError("operand recorded on a different tape");
    node.parents.push_back(p.id());
    node.requires_grad = node.requires_grad || nodes_[p.id()].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

void Tape::backward(Var loss) {
  if (loss.tape() != this) throw ContractError("loss is not on this tape");
  if (nodes_[loss.id()].value.size() != 1) {
    throw ContractError("backward requires a scalar loss, got shape " +
                        shape_string(nodes_[loss.id()].value.shape()));
  }
  grads_.assign(nodes_.size(), {});
  grads_[loss.id()] = GradBuffer(1, 1.0);

  std::vector<GradBuffer*> inputs;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (grads_[i].empty() || !node.backward) continue;
    inputs.clear();
    for (auto p : node.parents) {
      if (!nodes_[p].requires_grad) {
        inputs.push_back(nullptr);
        continue;
      }
      if (grads_[p].empty()) grads_[p].assign(nodes_[p].value.size(), 0.0);
      inputs.push_back(&grads_[p]);
    }
    node.backward(grads_[i], inputs);
  }
}

Tensor Tape::grad(Var v) const {
  if (v.tape() != this) throw ContractError("Var is not on this tape");
  const Tensor& value = nodes_[v.id()].value;
  if (v.id() >= grads_.size() || grads_[v.id()].empty()) return Tensor::zeros(value.shape());
  return Tensor(value.shape(), grads_[v.id()]);
}

void Tape::reset() {
  nodes_.clear();
  grads_.clear();
}

}  // namespace gfpn
