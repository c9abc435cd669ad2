// Copyright 2026 The bevkd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "bevkd/tensor.hpp"

namespace bevkd {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::uint32_t id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  std::uint32_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;

 private:
  Tape* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

// Receives the node's forward output and its gradient, and accumulates into
// the input gradients. Entries of `input_grads` are null for inputs that do
// not require a gradient.
using BackwardFn = std::function<void(const Tensor& out, const Tensor& grad_out,
                                      std::span<Tensor* const> input_grads)>;

/// Append-only record of differentiable operations. Backward replays the
/// record in reverse, visiting each node once.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaf whose gradient is tracked iff `value.requires_grad()`.
  Var leaf(Tensor value);
  Var constant(Tensor value);
  Var record(Tensor value, std::vector<Var> inputs, BackwardFn backward);

  const Tensor& value(Var v) const { return nodes_[v.id()].value; }
  bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }

  // Seeds d(loss)/d(loss) = 1 and accumulates gradients into every node
  // that requires one. Throws ValidationError for a non-scalar loss.
  void backward(Var loss);

  // Gradient accumulated for `v` by the last backward(); zeros if none reached it.
  Tensor grad(Var v) const;

  std::size_t size() const { return nodes_.size(); }
  std::size_t backward_visits() const { return backward_visits_; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::vector<std::uint32_t> inputs;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
  std::size_t backward_visits_ = 0;
};

/// Ordered, named collection of trainable tensors.
class ParameterSet {
 public:
  using Id = std::size_t;

  Id add(std::string name, Tensor value);
  std::size_t size() const { return values_.size(); }
  bool contains(const std::string& name) const;
  Id id_of(const std::string& name) const;

  Tensor& value(Id id) { return values_[id]; }
  const Tensor& value(Id id) const { return values_[id]; }
  const std::string& name(Id id) const { return names_[id]; }
  std::size_t element_count() const;

  friend bool operator==(const ParameterSet& a, const ParameterSet& b) {
    return a.names_ == b.names_ && a.values_ == b.values_;
  }

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
};

/// Parameters placed on a tape, indexed by ParameterSet::Id.
class Binding {
 public:
  // Trainable leaves: gradients flow into them.
  static Binding trainable(Tape& tape, const ParameterSet& params);
  // Constant leaves: used for frozen models.
  static Binding frozen(Tape& tape, const ParameterSet& params);

  Var operator[](ParameterSet::Id id) const { return vars_.at(id); }
  std::size_t size() const { return vars_.size(); }

 private:
  std::vector<Var> vars_;
};

}  // namespace bevkd
