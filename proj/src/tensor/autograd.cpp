#include "mipilot/tensor/autograd.hpp"

#include <sstream>

namespace mipilot::tensor {

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

template <Real S>
Parameter<S>& ParameterStore<S>::add(std::string name, Tensor<S> value, bool is_state) {
  if (find(name)) throw ArgumentError("duplicate parameter name '" + name + "'");
  auto p = std::make_unique<Parameter<S>>();
  p->name = std::move(name);
  p->value = std::move(value);
  p->is_state = is_state;
  p->trainable = !is_state;
  p->zero_grad();
  params_.push_back(std::move(p));
  return *params_.back();
}

template <Real S>
Parameter<S>* ParameterStore<S>::find(const std::string& name) {
  for (auto& p : params_)
    if (p->name == name) return p.get();
  return nullptr;
}

template <Real S>
Parameter<S>& ParameterStore<S>::get(const std::string& name) {
  if (auto* p = find(name)) return *p;
  throw ArgumentError("unknown parameter '" + name + "'");
}

template <Real S>
const Parameter<S>& ParameterStore<S>::get(const std::string& name) const {
  return const_cast<ParameterStore*>(this)->get(name);
}

template <Real S>
void ParameterStore<S>::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

template <Real S>
Var<S> Tape<S>::constant(Tensor<S> value) {
  nodes_.push_back(Node{std::move(value), {}, false, nullptr, {}});
  return {this, nodes_.size() - 1};
}

template <Real S>
Var<S> Tape<S>::input(Tensor<S> value) {
  nodes_.push_back(Node{std::move(value), {}, true, nullptr, {}});
  return {this, nodes_.size() - 1};
}

template <Real S>
Var<S> Tape<S>::parameter(Parameter<S>& p) {
  nodes_.push_back(Node{p.value, {}, !p.is_state, &p, {}});
  return {this, nodes_.size() - 1};
}

template <Real S>
Var<S> Tape<S>::record(Tensor<S> value, std::initializer_list<Var<S>> parents,
                       BackwardFn backward) {
  return record(std::move(value), std::vector<Var<S>>(parents), std::move(backward));
}

template <Real S>
Var<S> Tape<S>::record(Tensor<S> value, const std::vector<Var<S>>& parents, BackwardFn backward) {
  bool needs = false;
  for (const auto& p : parents) {
    if (p.tape != this) throw StateError("op mixes values from different tapes");
    needs = needs || nodes_[p.id].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), {}, needs, nullptr, needs ? std::move(backward) : nullptr});
  return {this, nodes_.size() - 1};
}

template <Real S>
Tensor<S>& Tape<S>::grad(std::size_t id) {
  auto& n = nodes_[id];
  if (n.grad.empty() && !n.value.empty()) n.grad = Tensor<S>(n.value.shape());
  return n.grad;
}

template <Real S>
void Tape<S>::backward(Var<S> loss) {
  if (used_) throw StateError("tape already used for a backward pass");
  used_ = true;
  if (loss.tape != this) throw StateError("loss recorded on a different tape");
  if (nodes_[loss.id].value.size() != 1) throw ShapeError("backward needs a scalar loss");
  grad(loss.id)[0] = S(1);
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    auto& n = nodes_[i];
    if (n.grad.empty()) continue;
    if (n.backward) n.backward(*this, i);
    if (n.param) {
      auto& p = *n.param;
      if (p.grad.shape() != p.value.shape()) p.grad = Tensor<S>(p.value.shape());
      for (std::size_t k = 0; k < p.grad.size(); ++k) p.grad[k] += n.grad[k];
      p.has_grad = true;
    }
  }
}

template class ParameterStore<float>;
template class ParameterStore<double>;
template class Tape<float>;
template class Tape<double>;

}  // namespace mipilot::tensor
