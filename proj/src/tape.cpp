// Copyright 2026 The bevkd Authors
// SPDX-License-Identifier: Apache-2.0

#include "bevkd/tape.hpp"

#include <algorithm>

#include "bevkd/error.hpp"

namespace bevkd {

const Tensor& Var::value() const { return tape_->value(*this); }
bool Var::requires_grad() const { return tape_->requires_grad(*this); }

Var Tape::leaf(Tensor value) {
  Node node;
  node.requires_grad = value.requires_grad();
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Tape::constant(Tensor value) {
  value.set_requires_grad(false);
  return leaf(std::move(value));
}

Var Tape::record(Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  Node node;
  node.value = std::move(value);
  node.inputs.reserve(inputs.size());
  for (const Var& in : inputs) {
    if (&in.tape() != this) throw ValidationError("operation mixes variables from different tapes");
    node.inputs.push_back(in.id());
    node.requires_grad = node.requires_grad || nodes_[in.id()].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

void Tape::backward(Var loss) {
  if (&loss.tape() != this) throw ValidationError("backward: loss is from another tape");
  const Tensor& lv = nodes_[loss.id()].value;
  if (lv.size() != 1) {
    throw ValidationError("backward: loss must be scalar, got shape " + shape_string(lv.shape()));
  }
  for (auto& n : nodes_) n.grad = Tensor();
  backward_visits_ = 0;
  nodes_[loss.id()].grad = Tensor(lv.shape(), 1.0);

  std::vector<Tensor> scratch;
  std::vector<Tensor*> slots;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.requires_grad || node.grad.empty() || !node.backward) continue;
    ++backward_visits_;
    scratch.assign(node.inputs.size(), Tensor());
    slots.assign(node.inputs.size(), nullptr);
    for (std::size_t k = 0; k < node.inputs.size(); ++k) {
      const Node& in = nodes_[node.inputs[k]];
      if (in.requires_grad) {
        scratch[k] = Tensor(in.value.shape());
        slots[k] = &scratch[k];
      }
    }
    node.backward(node.value, node.grad, slots);
    for (std::size_t k = 0; k < node.inputs.size(); ++k) {
      if (!slots[k]) continue;
      Node& in = nodes_[node.inputs[k]];
      if (in.grad.empty()) {
        in.grad = std::move(scratch[k]);
      } else {
        in.grad += scratch[k];
      }
    }
  }
}

Tensor Tape::grad(Var v) const {
  const Node& n = nodes_[v.id()];
  if (n.grad.empty()) return Tensor(n.value.shape());
  return n.grad;
}

ParameterSet::Id ParameterSet::add(std::string name, Tensor value) {
  if (contains(name)) throw ValidationError("duplicate parameter name '" + name + "'");
  value.set_requires_grad(true);
  names_.push_back(std::move(name));
  values_.push_back(std::move(value));
  return values_.size() - 1;
}

bool ParameterSet::contains(const std::string& name) const {
  return std::find(names_.begin(), names_.end(), name) != names_.end();
}

ParameterSet::Id ParameterSet::id_of(const std::string& name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) throw ValidationError("unknown parameter '" + name + "'");
  return static_cast<Id>(it - names_.begin());
}

std::size_t ParameterSet::element_count() const {
  std::size_t n = 0;
  for (const auto& v : values_) n += v.size();
  return n;
}

Binding Binding::trainable(Tape& tape, const ParameterSet& params) {
  Binding b;
  b.vars_.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor t = params.value(i);
    t.set_requires_grad(true);
    b.vars_.push_back(tape.leaf(std::move(t)));
  }
  return b;
}

Binding Binding::frozen(Tape& tape, const ParameterSet& params) {
  Binding b;
  b.vars_.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) b.vars_.push_back(tape.constant(params.value(i)));
  return b;
}

}  // namespace bevkd
