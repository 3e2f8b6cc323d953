#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "fprune/tensor.hpp"

namespace fprune {

// A trainable tensor with its gradient slot and optimizer moments.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  Tensor moment1;  // Adam first moment / SGD velocity
  Tensor moment2;  // Adam second moment
};

// Ordered, named parameter collection. Copying yields an independent store.
class ParamStore {
 public:
  Parameter& add(std::string name, Tensor value);

  Parameter& at(std::string_view name);
  const Parameter& at(std::string_view name) const;
  Parameter* find(std::string_view name) noexcept;
  const Parameter* find(std::string_view name) const noexcept;
  bool contains(std::string_view name) const noexcept { return find(name) != nullptr; }

  // Replaces a parameter's value; gradient and optimizer state are reset to
  // zeros of the new shape.
  void replace(std::string_view name, Tensor value);
  void remove(std::string_view name);

  void zero_grad() noexcept;
  void reset_optimizer_state() noexcept;

  std::size_t size() const noexcept { return params_.size(); }
  std::size_t scalar_count() const noexcept;
  std::vector<Parameter>& params() noexcept { return params_; }
  const std::vector<Parameter>& params() const noexcept { return params_; }

  std::size_t step_count = 0;  // Adam bias-correction counter

 private:
  std::vector<Parameter> params_;
};

class Tape;

// Handle to a value recorded on a tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

// Reverse-mode recording of one forward computation. Every op appends a node;
// backward() walks the nodes in reverse and accumulates parameter gradients
// into the owning ParamStore.
class Tape {
 public:
  // Backward callback: receives the tape and the node's own upstream gradient.
  using BackwardFn = std::function<void(Tape&, const Tensor& upstream)>;

  explicit Tape(bool record_gradients = true) : record_(record_gradients) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var param(Parameter& p);

  // Appends an op node. `fn` may be empty for nodes that propagate nothing.
  Var record(Tensor value, bool requires_grad, BackwardFn fn);

  bool recording() const noexcept { return record_; }
  bool requires_grad(Var v) const;
  const Tensor& value(Var v) const;
  Tensor& mutable_value(Var v);

  // Adds `g` into the gradient slot of `v` (allocated lazily).
  void accumulate(Var v, const Tensor& g);
  Tensor& grad_slot(Var v);

  // Seeds d(loss)/d(loss) = 1 and propagates. `loss` must be a one-element
  // tensor recorded on this tape. A tape can be walked once.
  void backward(Var loss);

  std::size_t node_count() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };

  const Node& node(Var v) const;
  Node& node(Var v);

  std::vector<Node> nodes_;
  bool record_;
  bool consumed_ = false;
};

inline const Tensor& Var::value() const { return tape->value(*this); }

}  // namespace fprune
