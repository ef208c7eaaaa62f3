#pragma once

// Gradient-check cases for every differentiable op, shared by unit and acceptance tests.

#include <string>
#include <utility>
#include <vector>

#include "gradcheck.hpp"
#include "mipilot/atcnet.hpp"

namespace opcases {

using gradcheck::Fn;
using gradcheck::random_tensor;
using mipilot::tensor::Tensor;
using mipilot::tensor::Var;
namespace T = mipilot::tensor;

struct Case {
  std::string name;
  std::function<std::pair<Fn, std::vector<Tensor<double>>>(std::uint64_t seed)> make;
};

using Inputs = std::vector<Tensor<double>>;
using Vars = std::vector<Var<double>>;
using Tp = T::Tape<double>;

inline std::vector<Case> all() {
  std::vector<Case> c;
  auto none = std::optional<Var<double>>{};

  c.push_back({"add", [](std::uint64_t s) {
                 std::mt19937_64 g(s);
                 return std::pair{Fn([](Tp&, const Vars& v) { return T::add(v[0], v[1]); }),
                                  Inputs{random_tensor({3, 4}, g), random_tensor({3, 4}, g)}};
               }});
  c.push_back({"scale", [](std::uint64_t s) {
                 std::mt19937_64 g(s);
                 return std::pair{Fn([](Tp&, const Vars& v) { return T::scale(v[0], -1.7); }),
                                  Inputs{random_tensor({5, 2}, g)}};
               }});
  c.push_back({"reshape+permute", [](std::uint64_t s) {
                 std::mt19937_64 g(s);
                 return std::pair{Fn([](Tp&, const Vars& v) {
                                    return T::permute(T::reshape(v[0], {2, 3, 4}), {2, 0, 1});
                                  }),
                                  Inputs{random_tensor({6, 4}, g)}};
               }});
  c.push_back({"slice", [](std::uint64_t s) {
                 std::mt19937_64 g(s);
                 return std::pair{Fn([](Tp&, const Vars& v) { return T::slice(v[0], 1, 1, 3); }),
                                  Inputs{random_tensor({2, 5, 3}, g)}};
               }});
  c.push_back({"concat0+mean0", [](std::uint64_t s) {
                 std::mt19937_64 g(s);
                 return std::pair{Fn([](Tp&, const Vars& v) {
                                    auto cat = T::concat0<double>({v[0], v[1]});
                                    return T::add(T::mean0(T::reshape(cat, {2, 3, 2})), v[2]);
                                  }),
                                  Inputs{random_tensor({3, 2}, g), random_tensor({3, 2}, g),
                                         random_tensor({3, 2}, g)}};
               }});
  c.push_back({"conv2d same", [none](std::uint64_t s) {
                 std::mt19937_64 g(s);
                 return std::pair{Fn([none](Tp&, const Vars& v) {
                                    return T::conv2d(v[0], v[1], none, T::Padding::same);
                                  }),
                                  Inputs{random_tensor({2, 2, 3, 9}, g), random_tensor({3, 2, 1, 4}, g)}};
               }});
  c.push_back({"conv2d valid grouped bias", [](std::uint64_t s) {
                 std::mt19937_64 g(s);
                 return std::pair{Fn([](Tp&, const Vars& v) {
                                    return T::conv2d(v[0], v[1], std::optional(v[2]), T::Padding::valid, 2);
                                  }),
                                  Inputs{random_tensor({2, 2, 4, 5}, g), random_tensor({4, 1, 4, 1}, g),
                                         random_tensor({4}, g)}};
               }});
  c.push_back({"batch_norm train", [](std::uint64_t s) {
                 std::mt19937_64 g(s);
                 return std::pair{Fn([](Tp&, const Vars& v) {
                                    Tensor<double> rm({3}, 0.0), rv({3}, 1.0);
                                    return T::batch_norm(v[0], v[1], v[2], rm, rv, T::Mode::train, 0.9,
                                                         1e-3, false);
                                  }),
                                  Inputs{random_tensor({4, 3, 1, 5}, g), random_tensor({3}, g),
                                         random_tensor({3}, g)}};
               }});
  c.push_back({"batch_norm eval", [](std::uint64_t s) {
                 std::mt19937_64 g(s);
                 return std::pair{Fn([](Tp&, const Vars& v) {
                                    Tensor<double> rm({2}, 0.3), rv({2}, 1.7);
                                    return T::batch_norm(v[0], v[1], v[2], rm, rv, T::Mode::eval, 0.9,
                                                         1e-3, false);
                                  }),
                                  Inputs{random_tensor({3, 2, 4}, g), random_tensor({2}, g),
                                         random_tensor({2}, g)}};
               }});
  c.push_back({"elu", [](std::uint64_t s) {
                 std::mt19937_64 g(s);
                 return std::pair{Fn([](Tp&, const Vars& v) { return T::elu(v[0]); }),
                                  Inputs{random_tensor({4, 6}, g)}};
               }});
  c.push_back({"avg_pool", [](std::uint64_t s) {
                 std::mt19937_64 g(s);
                 return std::pair{Fn([](Tp&, const Vars& v) { return T::avg_pool(v[0], 3); }),
                                  Inputs{random_tensor({2, 2, 11}, g)}};
               }});
  c.push_back({"dropout", [](std::uint64_t s) {
                 std::mt19937_64 g(s);
                 return std::pair{Fn([s](Tp&, const Vars& v) {
                                    T::Rng rng(s);
                                    return T::dropout(v[0], 0.4, rng, T::Mode::train);
                                  }),
                                  Inputs{random_tensor({3, 7}, g)}};
               }});
  c.push_back({"dense", [](std::uint64_t s) {
                 std::mt19937_64 g(s);
                 return std::pair{Fn([](Tp&, const Vars& v) { return T::dense(v[0], v[1], std::optional(v[2])); }),
                                  Inputs{random_tensor({2, 3, 4}, g), random_tensor({4, 5}, g),
                                         random_tensor({5}, g)}};
               }});
  c.push_back({"softmax", [](std::uint64_t s) {
                 std::mt19937_64 g(s);
                 return std::pair{Fn([](Tp&, const Vars& v) { return T::softmax(v[0]); }),
                                  Inputs{random_tensor({3, 5}, g, 2.0)}};
               }});
  c.push_back({"layer_norm", [](std::uint64_t s) {
                 std::mt19937_64 g(s);
                 return std::pair{Fn([](Tp&, const Vars& v) { return T::layer_norm(v[0], v[1], v[2], 1e-6); }),
                                  Inputs{random_tensor({3, 6}, g), random_tensor({6}, g), random_tensor({6}, g)}};
               }});
  c.push_back({"matmul", [](std::uint64_t s) {
                 std::mt19937_64 g(s);
                 return std::pair{Fn([](Tp&, const Vars& v) { return T::matmul(v[0], v[1]); }),
                                  Inputs{random_tensor({2, 3, 4}, g), random_tensor({2, 4, 5}, g)}};
               }});
  c.push_back({"matmul transposed", [](std::uint64_t s) {
                 std::mt19937_64 g(s);
                 return std::pair{Fn([](Tp&, const Vars& v) { return T::matmul(v[0], v[1], true); }),
                                  Inputs{random_tensor({2, 3, 4}, g), random_tensor({2, 5, 4}, g)}};
               }});
  c.push_back({"multi-head self-attention", [](std::uint64_t s) {
                 std::mt19937_64 g(s);
                 const std::size_t d = 4, hk = 6;
                 return std::pair{Fn([s](Tp&, const Vars& v) {
                                    T::Rng rng(s);
                                    T::AttentionWeights<double> w{v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8]};
                                    return T::multi_head_self_attention(v[0], w, {2, 3}, 0.3, rng, T::Mode::train)
                                        .output;
                                  }),
                                  Inputs{random_tensor({2, 5, d}, g), random_tensor({d, hk}, g),
                                         random_tensor({hk}, g), random_tensor({d, hk}, g),
                                         random_tensor({hk}, g), random_tensor({d, hk}, g),
                                         random_tensor({hk}, g), random_tensor({hk, d}, g),
                                         random_tensor({d}, g)}};
               }});
  c.push_back({"causal dilated conv1d", [](std::uint64_t s) {
                 std::mt19937_64 g(s);
                 const std::size_t dil = 1 + s % 3;
                 return std::pair{Fn([dil](Tp&, const Vars& v) {
                                    return T::causal_dilated_conv1d(v[0], v[1], std::optional(v[2]), dil);
                                  }),
                                  Inputs{random_tensor({2, 3, 9}, g), random_tensor({4, 3, 3}, g),
                                         random_tensor({4}, g)}};
               }});
  c.push_back({"cross_entropy", [](std::uint64_t s) {
                 std::mt19937_64 g(s);
                 return std::pair{Fn([s](Tp&, const Vars& v) {
                                    std::vector<int> labels{static_cast<int>(s % 4), 1, 3};
                                    return T::cross_entropy(v[0], std::span<const int>(labels));
                                  }),
                                  Inputs{random_tensor({3, 4}, g, 2.0)}};
               }});
  c.push_back({"nll from probabilities", [](std::uint64_t s) {
                 std::mt19937_64 g(s);
                 return std::pair{Fn([s](Tp&, const Vars& v) {
                                    std::vector<int> labels{2, static_cast<int>(s % 4), 0};
                                    return T::nll_from_probabilities(T::softmax(v[0]), std::span<const int>(labels));
                                  }),
                                  Inputs{random_tensor({3, 4}, g)}};
               }});
  return c;
}

// Small model whose shapes exercise every block; used for the whole-network check.
inline mipilot::atcnet::AtcNetConfig tiny_model(mipilot::atcnet::Fusion fusion) {
  mipilot::atcnet::AtcNetConfig m;
  m.channels = 3;
  m.samples = 48;
  m.cv.F1 = 2;
  m.cv.K_C = 6;
  m.cv.P1 = 2;
  m.cv.P2 = 3;
  m.cv.separable_kernel = 4;
  m.at.key_dim = 2;
  m.tc.filters = 3;
  m.tc.L = 2;
  m.n_windows = 3;
  m.fusion = fusion;
  return m;
}

// Relative error of parameter gradients of the full model in train mode (dropout masks fixed
// by reseeding, batch statistics in use).
inline double check_model(mipilot::atcnet::Fusion fusion, std::uint64_t seed,
                          std::size_t max_probe = 12, double h = 1e-6) {
  using mipilot::atcnet::AtcNet;
  using mipilot::atcnet::ForwardContext;
  auto cfg = tiny_model(fusion);
  cfg.init_seed = seed;
  cfg.at.use_layer_norm = seed % 2 == 1;
  AtcNet<double> model(cfg);
  std::mt19937_64 g(seed);
  const auto x = random_tensor({4, 1, 3, 48}, g, 3.0);
  std::vector<int> labels{0, 1, 2, 3};
  // Batch statistics must not drift between evaluations, so running stats are restored.
  std::vector<Tensor<double>> states;
  for (auto& p : model.params())
    if (p->is_state) states.push_back(p->value);
  auto loss_of = [&](bool backward) {
    std::size_t k = 0;
    for (auto& p : model.params())
      if (p->is_state) p->value = states[k++];
    T::Tape<double> tape;
    T::Rng rng(seed ^ 0xabcdef);
    ForwardContext<double> ctx{tape, T::Mode::train, rng};
    auto out = model.forward(ctx, tape.constant(x));
    auto loss = fusion == mipilot::atcnet::Fusion::mean_prob
                    ? T::nll_from_probabilities(out.probabilities, std::span<const int>(labels))
                    : T::cross_entropy(*out.logits, std::span<const int>(labels));
    const double v = loss.value()[0];
    if (backward) tape.backward(loss);
    return v;
  };
  model.params().zero_grad();
  loss_of(true);
  double worst = 0;
  for (auto& p : model.params()) {
    if (p->is_state) continue;
    const auto analytic = p->grad;
    std::vector<std::size_t> idx(p->value.size());
    for (std::size_t k = 0; k < idx.size(); ++k) idx[k] = k;
    std::shuffle(idx.begin(), idx.end(), g);
    if (idx.size() > max_probe) idx.resize(max_probe);
    double diff2 = 0, a2 = 0, n2 = 0;
    for (std::size_t k : idx) {
      const double orig = p->value[k];
      p->value[k] = orig + h;
      const double up = loss_of(false);
      p->value[k] = orig - h;
      const double down = loss_of(false);
      p->value[k] = orig;
      const double numeric = (up - down) / (2 * h);
      diff2 += (analytic[k] - numeric) * (analytic[k] - numeric);
      a2 += analytic[k] * analytic[k];
      n2 += numeric * numeric;
    }
    const double denom = std::max(std::sqrt(a2) + std::sqrt(n2), gradcheck::kDenomFloor);
    worst = std::max(worst, std::sqrt(diff2) / denom);
  }
  return worst;
}

}  // namespace opcases
