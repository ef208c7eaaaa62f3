#pragma once

#include <functional>
#include <deque>
#include <vector>

#include "mipilot/tensor/tensor.hpp"

namespace mipilot::tensor {

template <Real S>
class Tape;

// Handle to a value recorded on a tape.
template <Real S>
struct Var {
  Tape<S>* tape = nullptr;
  std::size_t id = 0;

  const Tensor<S>& value() const;
  const Shape& shape() const { return value().shape(); }
};

// Reverse-mode tape built fresh for every forward pass. backward() visits the recorded ops in
// reverse order exactly once; gradients of parameter leaves are accumulated into
// Parameter::grad.
template <Real S>
class Tape {
 public:
  // Called with the tape and the id of the node being differentiated.
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<S> constant(Tensor<S> value);
  // Input whose gradient is wanted (used by gradient checks).
  Var<S> input(Tensor<S> value);
  Var<S> parameter(Parameter<S>& p);

  // Records an op output. `backward` runs only if some parent requires a gradient.
  Var<S> record(Tensor<S> value, std::initializer_list<Var<S>> parents, BackwardFn backward);
  Var<S> record(Tensor<S> value, const std::vector<Var<S>>& parents, BackwardFn backward);

  void backward(Var<S> loss);

  const Tensor<S>& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  // Gradient of a node; allocated as zeros on first access.
  Tensor<S>& grad(std::size_t id);
  bool has_grad(std::size_t id) const { return !nodes_[id].grad.empty(); }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<S> value;
    Tensor<S> grad;
    bool requires_grad = false;
    Parameter<S>* param = nullptr;
    BackwardFn backward;
  };
  std::deque<Node> nodes_;  // stable addresses: values stay valid while recording
  bool used_ = false;
};

template <Real S>
const Tensor<S>& Var<S>::value() const {
  return tape->value(id);
}

}  // namespace mipilot::tensor
