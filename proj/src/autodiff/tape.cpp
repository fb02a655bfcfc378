// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the cdflow project.

#include "autodiff/tape.hpp"

#include <cmath>

#include "common/error.hpp"

namespace cdflow::ad {

const Tensor& Gradients::of(Var v) const {
  if (v.id() >= grads_.size() || !is_variable_[v.id()]) {
    fail(ErrorCode::contract, "gradient requested for a value that is not a tape variable");
  }
  return grads_[v.id()];
}

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::variable(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  n.is_variable = true;
  return push(std::move(n));
}

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::record(Tensor value, std::vector<Var> inputs, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  n.inputs.reserve(inputs.size());
  for (const Var& in : inputs) {
    if (in.tape() != this) fail(ErrorCode::contract, "op mixes values from different tapes");
    n.inputs.push_back(in.id());
    n.requires_grad = n.requires_grad || nodes_[in.id()].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(fn);
  return push(std::move(n));
}

Gradients Tape::backward(Var loss) {
  if (loss.tape() != this) fail(ErrorCode::contract, "backward() on a value from another tape");
  const Tensor& lv = loss.value();
  if (lv.size() != 1) {
    fail(ErrorCode::contract, "backward() needs a scalar loss, got " + shape_str(lv.shape()));
  }
  if (!std::isfinite(lv[0])) fail(ErrorCode::numeric, "backward() on a non-finite loss");

  std::vector<Tensor> grads(nodes_.size());
  grads[loss.id()] = Tensor(lv.shape(), 1.0);

  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.requires_grad || !node.backward || grads[i].empty()) continue;
    BackwardContext ctx{node.value, grads[i], {}, {}};
    ctx.inputs.reserve(node.inputs.size());
    ctx.input_grads.reserve(node.inputs.size());
    for (std::size_t in : node.inputs) {
      ctx.inputs.push_back(&nodes_[in].value);
      if (nodes_[in].requires_grad) {
        if (grads[in].empty()) grads[in] = Tensor(nodes_[in].value.shape(), 0.0);
        ctx.input_grads.push_back(&grads[in]);
      } else {
        ctx.input_grads.push_back(nullptr);
      }
    }
    node.backward(ctx);
  }

  Gradients out;
  out.grads_.resize(nodes_.size());
  out.is_variable_.assign(nodes_.size(), false);
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (!nodes_[i].is_variable) continue;
    out.is_variable_[i] = true;
    out.grads_[i] = grads[i].empty() ? Tensor(nodes_[i].value.shape(), 0.0) : std::move(grads[i]);
  }
  nodes_.clear();
  return out;
}

}  // namespace cdflow::ad
