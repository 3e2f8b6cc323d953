#include "fprune/autodiff.hpp"

#include <algorithm>
#include <stdexcept>

namespace fprune {

Parameter& ParamStore::add(std::string name, Tensor value) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter '" + name + "'");
  Parameter p;
  p.name = std::move(name);
  p.grad = Tensor(value.shape());
  p.moment1 = Tensor(value.shape());
  p.moment2 = Tensor(value.shape());
  p.value = std::move(value);
  params_.push_back(std::move(p));
  return params_.back();
}

Parameter* ParamStore::find(std::string_view name) noexcept {
  auto it = std::find_if(params_.begin(), params_.end(),
                         [&](const Parameter& p) { return p.name == name; });
  return it == params_.end() ? nullptr : &*it;
}

const Parameter* ParamStore::find(std::string_view name) const noexcept {
  auto it = std::find_if(params_.begin(), params_.end(),
                         [&](const Parameter& p) { return p.name == name; });
  return it == params_.end() ? nullptr : &*it;
}

Parameter& ParamStore::at(std::string_view name) {
  if (auto* p = find(name)) return *p;
  throw std::out_of_range("no parameter named '" + std::string(name) + "'");
}

const Parameter& ParamStore::at(std::string_view name) const {
  if (const auto* p = find(name)) return *p;
  throw std::out_of_range("no parameter named '" + std::string(name) + "'");
}

void ParamStore::replace(std::string_view name, Tensor value) {
  Parameter& p = at(name);
  p.grad = Tensor(value.shape());
  p.moment1 = Tensor(value.shape());
  p.moment2 = Tensor(value.shape());
  p.value = std::move(value);
}

void ParamStore::remove(std::string_view name) {
  std::erase_if(params_, [&](const Parameter& p) { return p.name == name; });
}

void ParamStore::zero_grad() noexcept {
  for (auto& p : params_) p.grad.fill(0.0);
}

void ParamStore::reset_optimizer_state() noexcept {
  for (auto& p : params_) {
    p.moment1.fill(0.0);
    p.moment2.fill(0.0);
  }
  step_count = 0;
}

std::size_t ParamStore::scalar_count() const noexcept {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

Var Tape::constant(Tensor value) { return record(std::move(value), false, {}); }

Var Tape::param(Parameter& p) {
  Var v = record(p.value, true, {});
  if (record_) nodes_.back().param = &p;
  return v;
}

Var Tape::record(Tensor value, bool requires_grad, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = record_ && requires_grad;
  if (n.requires_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

const Tape::Node& Tape::node(Var v) const {
  if (v.tape != this || v.id >= nodes_.size()) {
    throw std::logic_error("variable does not belong to this tape");
  }
  return nodes_[v.id];
}

Tape::Node& Tape::node(Var v) {
  if (v.tape != this || v.id >= nodes_.size()) {
    throw std::logic_error("variable does not belong to this tape");
  }
  return nodes_[v.id];
}

bool Tape::requires_grad(Var v) const { return node(v).requires_grad; }
const Tensor& Tape::value(Var v) const { return node(v).value; }
Tensor& Tape::mutable_value(Var v) { return node(v).value; }

Tensor& Tape::grad_slot(Var v) {
  Node& n = node(v);
  if (n.grad.shape() != n.value.shape()) n.grad = Tensor(n.value.shape());
  return n.grad;
}

void Tape::accumulate(Var v, const Tensor& g) {
  if (!node(v).requires_grad) return;
  grad_slot(v) += g;
}

void Tape::backward(Var loss) {
  if (!record_) throw std::logic_error("backward on a tape that does not record gradients");
  if (nodes_.empty()) throw std::logic_error("backward called before any forward pass");
  if (consumed_) throw std::logic_error("backward already ran on this tape");
  Node& root = node(loss);
  if (root.value.size() != 1) {
    throw ShapeError("backward needs a scalar loss, got shape " + shape_string(root.value.shape()));
  }
  consumed_ = true;
  if (!root.requires_grad) return;
  grad_slot(loss).fill(1.0);

  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.param) {
      n.param->grad += n.grad;
    } else if (n.backward) {
      // Take the gradient out first: the callback may grow nodes_ storage.
      Tensor upstream = std::move(n.grad);
      BackwardFn fn = std::move(nodes_[i].backward);
      fn(*this, upstream);
    }
  }
}

}  // namespace fprune
