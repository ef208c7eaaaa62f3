#include "mipilot/training.hpp"

#include <cmath>
#include <iostream>
#include <limits>
#include <numeric>
#include <random>

#include "mipilot/tensor/optim.hpp"

namespace mipilot::training {

using tensor::Mode;
using tensor::Rng;
using tensor::Tensor;

void TrainConfig::validate() const {
  if (epochs < 0) throw ArgumentError("epochs must be non-negative");
  if (batch_size < 1) throw ArgumentError("batch size must be positive");
  if (!(lr >= 0) || !std::isfinite(lr)) throw ArgumentError("learning rate must be non-negative");
  if (weight_decay < 0 || !std::isfinite(weight_decay))
    throw ArgumentError("weight decay must be non-negative");
}

template <Real S>
Tensor<S> make_batch(std::span<const LabeledWindow* const> batch, int channels, int samples) {
  const auto C = static_cast<std::size_t>(channels), T = static_cast<std::size_t>(samples);
  Tensor<S> x({batch.size(), 1, C, T});
  S* out = x.data();
  for (const LabeledWindow* w : batch) {
    if (w->window.channels != channels || w->window.length != samples)
      throw ShapeError("window " + std::to_string(w->window.channels) + "x" +
                       std::to_string(w->window.length) + " does not match model input " +
                       std::to_string(channels) + "x" + std::to_string(samples));
    for (float v : w->window.data) *out++ = static_cast<S>(v);
  }
  return x;
}

template <Real S>
double batch_loss(AtcNet<S>& model, std::span<const LabeledWindow* const> batch, Mode mode,
                  Rng& rng, bool backward) {
  const auto& mc = model.config();
  tensor::Tape<S> tape;
  atcnet::ForwardContext<S> ctx{tape, mode, rng};
  auto out = model.forward(ctx, tape.constant(make_batch<S>(batch, mc.channels, mc.samples)));
  std::vector<int> labels;
  labels.reserve(batch.size());
  for (const auto* w : batch) labels.push_back(class_index(w->label));
  auto loss = out.logits && mc.fusion != atcnet::Fusion::mean_prob
                  ? tensor::cross_entropy(*out.logits, std::span<const int>(labels))
                  : tensor::nll_from_probabilities(out.probabilities, std::span<const int>(labels));
  const double value = static_cast<double>(loss.value()[0]);
  if (backward) tape.backward(loss);
  return value;
}

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

template <Real S>
TrainResult fit(AtcNet<S>& model, std::span<const LabeledWindow> data, const TrainConfig& cfg) {
  cfg.validate();
  if (data.empty()) throw TrainingError("training data is empty");
  tensor::AdamConfig ac;
  ac.lr = cfg.lr;
  ac.weight_decay = cfg.weight_decay;
  tensor::Adam<S> adam(model.params(), ac);

  TrainResult result;
  std::vector<std::size_t> order(data.size());
  std::vector<const LabeledWindow*> batch;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (cfg.shuffle) {
      Rng shuffle_rng(mix(cfg.seed, static_cast<std::uint64_t>(epoch)));
      std::shuffle(order.begin(), order.end(), shuffle_rng);
    }
    Rng dropout_rng(mix(~cfg.seed, static_cast<std::uint64_t>(epoch)));
    double total = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(&data[order[i]]);
      model.params().zero_grad();
      const double loss = batch_loss(model, std::span<const LabeledWindow* const>(batch),
                                     Mode::train, dropout_rng, true);
      if (!std::isfinite(loss))
        throw NumericalError("training loss became non-finite in epoch " + std::to_string(epoch + 1));
      adam.step();
      total += loss * static_cast<double>(batch.size());
    }
    result.epoch_loss.push_back(total / static_cast<double>(data.size()));
  }
  return result;
}

}  // namespace

template <Real S>
TrainResult pretrain(AtcNet<S>& model, std::span<const LabeledWindow> data, const TrainConfig& cfg) {
  return fit(model, data, cfg);
}

template <Real S>
TrainResult finetune(AtcNet<S>& model, std::span<const LabeledWindow> data, const TrainConfig& cfg) {
  if (!model.is_frozen_for_finetune())
    throw ContractError("fine-tuning needs a model passed through freeze_for_finetune()");
  return fit(model, data, cfg);
}

std::int64_t ConfusionMatrix::support(int truth) const {
  std::int64_t s = 0;
  for (int p = 0; p < n; ++p) s += at(truth, p);
  return s;
}

std::int64_t ConfusionMatrix::total() const {
  return std::accumulate(counts.begin(), counts.end(), std::int64_t{0});
}

ConfusionMatrix confusion_from(std::span<const MiClass> truth, std::span<const MiClass> predicted) {
  if (truth.size() != predicted.size())
    throw ArgumentError("truth and prediction lengths differ");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < truth.size(); ++i) ++cm.at(class_index(truth[i]), class_index(predicted[i]));
  return cm;
}

AccuracyReport accuracy_from_confusion(const ConfusionMatrix& cm) {
  AccuracyReport r;
  r.confusion = cm;
  double sum = 0;
  int present = 0;
  for (int i = 0; i < cm.n; ++i) {
    const auto l = cm.support(i);
    if (l == 0) {
      r.per_class_recall[i] = std::numeric_limits<double>::quiet_NaN();
      r.warnings.push_back(std::string("class ") + class_letter(kAllClasses[i]) +
                           " has no samples and is left out of the accuracy average");
      continue;
    }
    r.per_class_recall[i] = static_cast<double>(cm.at(i, i)) / static_cast<double>(l);
    sum += r.per_class_recall[i];
    ++present;
  }
  if (present == 0) throw ArgumentError("cannot score an empty confusion matrix");
  r.accuracy = sum / present;
  return r;
}

double plain_accuracy(const ConfusionMatrix& cm) {
  std::int64_t hit = 0;
  for (int i = 0; i < cm.n; ++i) hit += cm.at(i, i);
  return static_cast<double>(hit) / static_cast<double>(cm.total());
}

nlohmann::json AccuracyReport::to_json() const {
  nlohmann::json recall = nlohmann::json::object();
  nlohmann::json confusion_rows = nlohmann::json::array();
  for (int i = 0; i < confusion.n; ++i) {
    const std::string name(1, class_letter(kAllClasses[i]));
    recall[name] = std::isnan(per_class_recall[i]) ? nlohmann::json(nullptr)
                                                    : nlohmann::json(per_class_recall[i]);
    nlohmann::json row = nlohmann::json::array();
    for (int p = 0; p < confusion.n; ++p) row.push_back(confusion.at(i, p));
    confusion_rows.push_back(std::move(row));
  }
  nlohmann::json timeline = nlohmann::json::array();
  for (const auto& [run, acc] : run_timeline) timeline.push_back({{"run", run}, {"accuracy", acc}});
  return {{"format", "mipilot-report/1"},
          {"accuracy", accuracy},
          {"classes", {"N", "R", "L", "K"}},
          {"per_class_recall", std::move(recall)},
          {"confusion", std::move(confusion_rows)},
          {"samples", confusion.total()},
          {"timeline", std::move(timeline)},
          {"warnings", warnings}};
}

template <Real S>
std::vector<std::array<double, kNumClasses>> predict_probabilities(AtcNet<S>& model,
                                                                  std::span<const LabeledWindow> data,
                                                                  int batch_size) {
  if (batch_size < 1) throw ArgumentError("batch size must be positive");
  const auto& mc = model.config();
  std::vector<std::array<double, kNumClasses>> out;
  out.reserve(data.size());
  std::vector<const LabeledWindow*> batch;
  for (std::size_t start = 0; start < data.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(data.size(), start + static_cast<std::size_t>(batch_size));
    batch.clear();
    for (std::size_t i = start; i < end; ++i) batch.push_back(&data[i]);
    const auto probs = model.predict(make_batch<S>(batch, mc.channels, mc.samples));
    for (std::size_t b = 0; b < batch.size(); ++b) {
      std::array<double, kNumClasses> p{};
      for (int k = 0; k < kNumClasses; ++k) p[k] = static_cast<double>(probs[b * kNumClasses + k]);
      out.push_back(p);
    }
  }
  return out;
}

std::vector<MiClass> argmax_labels(std::span<const std::array<double, kNumClasses>> probs) {
  std::vector<MiClass> out;
  out.reserve(probs.size());
  for (const auto& p : probs) {
    int best = 0;
    for (int k = 1; k < kNumClasses; ++k)
      if (p[k] > p[best]) best = k;
    out.push_back(kAllClasses[best]);
  }
  return out;
}

namespace {

template <Real S>
AccuracyReport score(AtcNet<S>& model, std::span<const LabeledWindow> data) {
  if (data.empty()) throw ArgumentError("evaluation data is empty");
  const auto probs = predict_probabilities(model, data);
  const auto predicted = argmax_labels(probs);
  std::vector<MiClass> truth;
  truth.reserve(data.size());
  for (const auto& w : data) truth.push_back(w.label);
  return accuracy_from_confusion(confusion_from(truth, predicted));
}

}  // namespace

template <Real S>
AccuracyReport evaluate(AtcNet<S>& model, std::span<const LabeledWindow> data) {
  auto report = score(model, data);
  for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";
  return report;
}

template <Real S>
std::vector<std::pair<int, double>> per_run_timeline(
    AtcNet<S>& model, std::span<const std::vector<LabeledWindow>> runs) {
  std::vector<std::pair<int, double>> out;
  for (std::size_t r = 0; r < runs.size(); ++r) {
    if (runs[r].empty()) continue;
    out.emplace_back(static_cast<int>(r), score(model, std::span<const LabeledWindow>(runs[r])).accuracy);
  }
  return out;
}

#define MIPILOT_INSTANTIATE(S)                                                                    \
  template Tensor<S> make_batch<S>(std::span<const LabeledWindow* const>, int, int);              \
  template double batch_loss<S>(AtcNet<S>&, std::span<const LabeledWindow* const>, Mode, Rng&,    \
                                bool);                                                            \
  template TrainResult pretrain<S>(AtcNet<S>&, std::span<const LabeledWindow>,                    \
                                   const TrainConfig&);                                           \
  template TrainResult finetune<S>(AtcNet<S>&, std::span<const LabeledWindow>,                    \
                                   const TrainConfig&);                                           \
  template std::vector<std::array<double, kNumClasses>> predict_probabilities<S>(                 \
      AtcNet<S>&, std::span<const LabeledWindow>, int);                                           \
  template AccuracyReport evaluate<S>(AtcNet<S>&, std::span<const LabeledWindow>);                \
  template std::vector<std::pair<int, double>> per_run_timeline<S>(                               \
      AtcNet<S>&, std::span<const std::vector<LabeledWindow>>);

MIPILOT_INSTANTIATE(float)
MIPILOT_INSTANTIATE(double)

}  // namespace mipilot::training
