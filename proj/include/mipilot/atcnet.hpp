#pragma once

#include <string>
#include <vector>

#include "mipilot/tensor/checkpoint.hpp"
#include "mipilot/tensor/ops.hpp"

namespace mipilot::atcnet {

using tensor::Mode;
using tensor::Real;
using tensor::Rng;
using tensor::Tensor;
using tensor::Var;

struct CvConfig {
  int F1 = 8;
  int K_C = 266;
  int D = 2;
  int P1 = 8;
  int P2 = 7;
  int separable_kernel = 16;
  double dropout = 0.3;

  int F2() const { return F1 * D; }
};

struct AtConfig {
  int heads = 2;
  int key_dim = 8;
  double dropout = 0.5;
  bool use_layer_norm = false;
};

struct TcConfig {
  int L = 3;
  int K_T = 3;
  int filters = 12;
  double dropout = 0.3;
};

enum class Fusion { mean_prob, mean_logit, concat_dense };

std::string to_string(Fusion f);
Fusion fusion_from_string(const std::string& s);

struct AtcNetConfig {
  int channels = kChannels;
  int samples = 1750;
  CvConfig cv;
  AtConfig at;
  TcConfig tc;
  int n_windows = 15;
  int n_classes = kNumClasses;
  Fusion fusion = Fusion::mean_prob;
  double bn_momentum = 0.9;
  double bn_eps = 1e-3;
  std::uint64_t init_seed = 1;

  // Length of the CV block output sequence: floor(T / (P1 * P2)).
  int Tc() const { return samples / (cv.P1 * cv.P2); }
  int Tw() const { return Tc() - n_windows + 1; }
  int d() const { return cv.F2(); }

  void validate() const;
  std::string to_text() const;
  static AtcNetConfig from_text(const std::string& text);

  static AtcNetConfig paper();
  // Reduced input length and kernels for quick runs (C=16, T=500, K_C=76, P1=4, P2=5, n=7).
  static AtcNetConfig desk();
};

// 1 + 2 (K_T - 1)(2 L - 1)
int receptive_field(const TcConfig& tc);

template <Real S>
struct ForwardContext {
  tensor::Tape<S>& tape;
  Mode mode;
  Rng& rng;
};

template <Real S>
struct ModelOutput {
  Var<S> probabilities;             // [B, n_classes]
  std::optional<Var<S>> logits;     // fused logits when the fusion rule has them
};

template <Real S>
class AtcNet {
 public:
  explicit AtcNet(AtcNetConfig config);

  const AtcNetConfig& config() const { return config_; }
  tensor::ParameterStore<S>& params() { return params_; }
  const tensor::ParameterStore<S>& params() const { return params_; }

  // [B, 1, C, T] -> [B, Tc, d]
  Var<S> cv_block_forward(const ForwardContext<S>& ctx, Var<S> input);
  // Features of the last time step of each window: [N, Tw, d] -> [N, filters].
  Var<S> window_features(const ForwardContext<S>& ctx, Var<S> window);
  // [N, Tw, d] -> logits [N, n_classes]
  Var<S> window_head_forward(const ForwardContext<S>& ctx, Var<S> window);
  ModelOutput<S> forward(const ForwardContext<S>& ctx, Var<S> input);

  // Convenience eval-mode inference on a [B, 1, C, T] tensor.
  Tensor<S> predict(const Tensor<S>& input);

  // Trainable exactly for the CV block and the final dense layer.
  void freeze_for_finetune();
  void unfreeze_all();
  bool is_frozen_for_finetune() const;

  tensor::Checkpoint to_checkpoint() const;
  static AtcNet from_checkpoint(const tensor::Checkpoint& ckpt);

 private:
  Var<S> param(const ForwardContext<S>& ctx, const std::string& name);
  Var<S> batch_norm(const ForwardContext<S>& ctx, Var<S> x, const std::string& prefix);

  AtcNetConfig config_;
  tensor::ParameterStore<S> params_;
};

// n overlapping windows of length Tc - n + 1 along axis 1 of [B, Tc, d].
template <Real S>
std::vector<Var<S>> split_windows(Var<S> sequence, int n);

// Learnable (non-state) parameter elements.
template <Real S>
std::size_t count_parameters(const AtcNet<S>& model);

// True when the name belongs to the CV block or the final dense layer.
bool is_finetune_parameter(const std::string& name);

}  // namespace mipilot::atcnet
