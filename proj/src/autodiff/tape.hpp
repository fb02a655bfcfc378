// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the cdflow project.

#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "autodiff/tensor.hpp"

namespace cdflow::ad {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid until the
/// owning tape is cleared.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t size() const { return value().size(); }
  bool requires_grad() const;

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Per-node view handed to a backward closure. `input_grads[i]` is null when
/// input i does not require a gradient; otherwise closures accumulate into it.
struct BackwardContext {
  const Tensor& output;
  const Tensor& grad_output;
  std::vector<const Tensor*> inputs;
  std::vector<Tensor*> input_grads;
};

using BackwardFn = std::function<void(BackwardContext&)>;

/// Gradients of a scalar loss with respect to the tape's variables, indexed
/// by the Var handles that created them.
class Gradients {
 public:
  const Tensor& of(Var v) const;
  std::size_t size() const { return grads_.size(); }

 private:
  friend class Tape;
  std::vector<Tensor> grads_;
  std::vector<bool> is_variable_;
};

/// Eager reverse-mode tape. One tape belongs to one thread; build it during
/// the forward pass, call backward() once, and it is cleared.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf whose gradient is reported by backward().
  Var variable(Tensor value);
  /// Leaf that never receives a gradient.
  Var constant(Tensor value);

  /// Records an op output. The node requires a gradient iff any input does;
  /// otherwise `fn` is dropped.
  Var record(Tensor value, std::vector<Var> inputs, BackwardFn fn);

  /// Accumulates d(loss)/d(node) in exact reverse recording order, returns
  /// the gradients of every variable leaf, then clears the tape.
  Gradients backward(Var loss);

  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }

 private:
  struct Node {
    Tensor value;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
    bool is_variable = false;
  };

  Var push(Node node);

  std::vector<Node> nodes_;
};

inline const Tensor& Var::value() const { return tape_->value(id_); }
inline bool Var::requires_grad() const { return tape_->requires_grad(id_); }

}  // namespace cdflow::ad
