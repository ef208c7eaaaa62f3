#include "mipilot/tensor/optim.hpp"

#include <cmath>

namespace mipilot::tensor {

template <Real S>
Adam<S>::Adam(ParameterStore<S>& params, AdamConfig config) : params_(params), config_(config) {
  if (!(config.lr >= 0) || !(config.eps > 0) || config.beta1 < 0 || config.beta1 >= 1 ||
      config.beta2 < 0 || config.beta2 >= 1 || config.weight_decay < 0)
    throw ArgumentError("invalid Adam configuration");
  for (const auto& p : params_) {
    m_.emplace_back(p->value.shape());
    v_.emplace_back(p->value.shape());
  }
}

template <Real S>
void Adam<S>::step() {
  if (m_.size() != params_.size()) throw StateError("parameter store changed after Adam creation");
  for (const auto& p : params_) {
    if (p->trainable && !p->is_state && !p->has_grad)
      throw StateError("trainable parameter '" + p->name + "' has no gradient");
  }
  ++step_count_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_count_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_count_));
  const S lr = static_cast<S>(config_.lr);
  const S b1 = static_cast<S>(config_.beta1), b2 = static_cast<S>(config_.beta2);
  const S eps = static_cast<S>(config_.eps), wd = static_cast<S>(config_.weight_decay);
  const S c1 = static_cast<S>(1.0 / bc1), c2 = static_cast<S>(1.0 / bc2);
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto& p = params_[k];
    if (!p.trainable || p.is_state) continue;
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      S g = p.grad[i];
      if (!config_.decoupled_weight_decay) g += wd * p.value[i];
      m[i] = b1 * m[i] + (S(1) - b1) * g;
      v[i] = b2 * v[i] + (S(1) - b2) * g * g;
      S update = (m[i] * c1) / (std::sqrt(v[i] * c2) + eps);
      if (config_.decoupled_weight_decay) update += wd * p.value[i];
      p.value[i] -= lr * update;
    }
  }
}

template class Adam<float>;
template class Adam<double>;

}  // namespace mipilot::tensor
