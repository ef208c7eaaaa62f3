#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "mipilot/atcnet.hpp"
#include "mipilot/windowing.hpp"

namespace mipilot::training {

using atcnet::AtcNet;
using tensor::Real;
using windowing::LabeledWindow;

struct TrainConfig {
  int epochs = 500;
  int batch_size = 32;
  double lr = 0.001;
  double weight_decay = 0.0005;
  std::uint64_t seed = 0;
  bool shuffle = true;

  static TrainConfig pretrain_default() { return {}; }
  static TrainConfig pretrain_short() {
    TrainConfig c;
    c.epochs = 200;
    return c;
  }
  static TrainConfig finetune_default() {
    TrainConfig c;
    c.epochs = 15;
    return c;
  }
  // Zero epochs is a no-op run; batch size must be positive and learning rate non-negative.
  void validate() const;
};

struct TrainResult {
  std::vector<double> epoch_loss;  // mean training loss of each epoch
};

// Mini-batch training of every trainable parameter with Adam.
template <Real S>
TrainResult pretrain(AtcNet<S>& model, std::span<const LabeledWindow> data, const TrainConfig& cfg);

// Same loop restricted to a model frozen for fine-tuning. Throws ContractError otherwise.
template <Real S>
TrainResult finetune(AtcNet<S>& model, std::span<const LabeledWindow> data, const TrainConfig& cfg);

// Loss and gradients of one batch, without an optimizer step. Returns the batch loss.
template <Real S>
double batch_loss(AtcNet<S>& model, std::span<const LabeledWindow* const> batch, tensor::Mode mode,
                  tensor::Rng& rng, bool backward);

struct ConfusionMatrix {
  int n = kNumClasses;
  std::vector<std::int64_t> counts = std::vector<std::int64_t>(kNumClasses * kNumClasses, 0);

  std::int64_t& at(int truth, int predicted) { return counts[truth * n + predicted]; }
  std::int64_t at(int truth, int predicted) const { return counts[truth * n + predicted]; }
  std::int64_t support(int truth) const;
  std::int64_t total() const;
};

ConfusionMatrix confusion_from(std::span<const MiClass> truth, std::span<const MiClass> predicted);

struct AccuracyReport {
  double accuracy = 0;
  // Recall of each class; NaN for classes without samples, which are left out of the average.
  std::array<double, kNumClasses> per_class_recall{};
  ConfusionMatrix confusion;
  std::vector<std::pair<int, double>> run_timeline;
  std::vector<std::string> warnings;

  nlohmann::json to_json() const;
};

// Mean over present classes of TP_i / l_i. Absent classes are dropped with a warning.
AccuracyReport accuracy_from_confusion(const ConfusionMatrix& cm);
double plain_accuracy(const ConfusionMatrix& cm);

template <Real S>
std::vector<std::array<double, kNumClasses>> predict_probabilities(AtcNet<S>& model,
                                                                  std::span<const LabeledWindow> data,
                                                                  int batch_size = 64);
std::vector<MiClass> argmax_labels(std::span<const std::array<double, kNumClasses>> probs);

template <Real S>
AccuracyReport evaluate(AtcNet<S>& model, std::span<const LabeledWindow> data);

template <Real S>
std::vector<std::pair<int, double>> per_run_timeline(
    AtcNet<S>& model, std::span<const std::vector<LabeledWindow>> runs);

// Model input tensor [B, 1, C, T] for a batch of windows.
template <Real S>
tensor::Tensor<S> make_batch(std::span<const LabeledWindow* const> batch, int channels, int samples);

}  // namespace mipilot::training
