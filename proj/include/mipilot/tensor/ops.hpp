#pragma once

#include <optional>
#include <random>
#include <span>
#include <vector>

#include "mipilot/tensor/autograd.hpp"

namespace mipilot::tensor {

enum class Mode { train, eval };
enum class Padding { same, valid };

using Rng = std::mt19937_64;

// Fixed-order dot product; the result depends only on the values, never on addresses.
template <Real S>
S dot(const S* a, const S* b, std::size_t n);

// Elementwise a + b (equal shapes).
template <Real S>
Var<S> add(Var<S> a, Var<S> b);

template <Real S>
Var<S> scale(Var<S> x, S factor);

template <Real S>
Var<S> reshape(Var<S> x, Shape shape);

// Output axis i takes input axis perm[i].
template <Real S>
Var<S> permute(Var<S> x, std::vector<std::size_t> perm);

// Rows [start, start + length) along `axis`.
template <Real S>
Var<S> slice(Var<S> x, std::size_t axis, std::size_t start, std::size_t length);

// Concatenation along axis 0.
template <Real S>
Var<S> concat0(const std::vector<Var<S>>& parts);

// Mean over axis 0: [n, ...] -> [...].
template <Real S>
Var<S> mean0(Var<S> x);

// 2-D cross-correlation over [B, Cin, H, W] with kernel [Cout, Cin/groups, KH, KW].
// "same" padding puts the extra sample of an even kernel before the data.
template <Real S>
Var<S> conv2d(Var<S> input, Var<S> kernel, std::optional<Var<S>> bias, Padding padding,
              std::size_t groups = 1);

// Per-channel (axis 1) normalization. Train mode uses batch statistics and, when
// update_running is set, folds them into the running estimates:
//   running = momentum * running + (1 - momentum) * batch.
template <Real S>
Var<S> batch_norm(Var<S> input, Var<S> gamma, Var<S> beta, Tensor<S>& running_mean,
                  Tensor<S>& running_var, Mode mode, S momentum, S eps, bool update_running = true);

template <Real S>
Var<S> elu(Var<S> x, S alpha = S(1));

// Average pooling of the last axis with window and stride `pool`; the remainder is dropped.
template <Real S>
Var<S> avg_pool(Var<S> x, std::size_t pool);

// Inverted dropout; identity in eval mode or at rate 0.
template <Real S>
Var<S> dropout(Var<S> x, S rate, Rng& rng, Mode mode);

// x [..., in] * weight [in, out] + bias [out].
template <Real S>
Var<S> dense(Var<S> x, Var<S> weight, std::optional<Var<S>> bias);

// Softmax over the last axis.
template <Real S>
Var<S> softmax(Var<S> x);

// Normalization over the last axis.
template <Real S>
Var<S> layer_norm(Var<S> x, Var<S> gamma, Var<S> beta, S eps);

// Batched matrix product over leading axes: [..., M, K] x [..., K, N], or [..., N, K] when
// transpose_b is set.
template <Real S>
Var<S> matmul(Var<S> a, Var<S> b, bool transpose_b = false);

struct AttentionShape {
  std::size_t heads = 2;
  std::size_t key_dim = 8;
};

template <Real S>
struct AttentionWeights {
  Var<S> wq, bq, wk, bk, wv, bv, wo, bo;
};

template <Real S>
struct AttentionOutput {
  Var<S> output;   // [B, S, d]
  Var<S> weights;  // [B, heads, S, S], rows sum to one
};

// Scaled dot-product self-attention per head, concatenated and projected back to d.
template <Real S>
AttentionOutput<S> multi_head_self_attention(Var<S> x, const AttentionWeights<S>& w,
                                             AttentionShape shape, S dropout_rate, Rng& rng,
                                             Mode mode);

// Causal dilated convolution over [B, Cin, S] with kernel [Cout, Cin, K]. Tap K-1 multiplies the
// current sample, tap k the sample (K-1-k)*dilation steps back; the sequence is zero padded
// on the left so the length is preserved.
template <Real S>
Var<S> causal_dilated_conv1d(Var<S> x, Var<S> kernel, std::optional<Var<S>> bias,
                             std::size_t dilation);

// Mean negative log-likelihood of integer labels from logits [B, C] (log-sum-exp stabilized).
template <Real S>
Var<S> cross_entropy(Var<S> logits, std::span<const int> labels);

// Mean negative log-likelihood from probabilities [B, C].
template <Real S>
Var<S> nll_from_probabilities(Var<S> probs, std::span<const int> labels);

}  // namespace mipilot::tensor
