#pragma once

#include <vector>

#include "mipilot/tensor/tensor.hpp"

namespace mipilot::tensor {

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0005;
  // Decoupled (AdamW-style) decay by default; false folds decay into the gradient as L2.
  bool decoupled_weight_decay = true;
};

// Adam moments for every parameter of one store. Frozen parameters keep their moments but are
// never touched by step().
template <Real S>
class Adam {
 public:
  Adam(ParameterStore<S>& params, AdamConfig config);

  // One update of every trainable parameter. Throws StateError when a trainable parameter has no
  // gradient.
  void step();

  long step_count() const { return step_count_; }
  const AdamConfig& config() const { return config_; }
  const Tensor<S>& first_moment(std::size_t i) const { return m_[i]; }
  const Tensor<S>& second_moment(std::size_t i) const { return v_[i]; }

 private:
  ParameterStore<S>& params_;
  AdamConfig config_;
  std::vector<Tensor<S>> m_, v_;
  long step_count_ = 0;
};

}  // namespace mipilot::tensor
