#include <cmath>
#include <map>
#include <numbers>
#include <random>

#include "doctest.h"
#include "mipilot/training.hpp"
#include "op_cases.hpp"

using namespace mipilot;
using namespace mipilot::training;
using atcnet::AtcNet;
using atcnet::AtcNetConfig;
using windowing::LabeledWindow;

namespace {

AtcNetConfig small_model() {
  auto c = opcases::tiny_model(atcnet::Fusion::mean_prob);
  c.at.dropout = 0.0;
  c.cv.dropout = 0.0;
  c.tc.dropout = 0.0;
  return c;
}

// Class k puts a sinusoid of a class-specific frequency on channel k % 3.
std::vector<LabeledWindow> separable_data(int per_class, std::uint64_t seed) {
  std::mt19937_64 g(seed);
  std::normal_distribution<double> noise(0.0, 0.3);
  std::uniform_real_distribution<double> phase(0.0, 2 * std::numbers::pi);
  std::vector<LabeledWindow> out;
  for (int i = 0; i < per_class; ++i)
    for (int k = 0; k < kNumClasses; ++k) {
      LabeledWindow w;
      w.label = kAllClasses[k];
      w.window.channels = 3;
      w.window.length = 48;
      w.window.data.resize(3 * 48);
      const double ph = phase(g);
      for (int c = 0; c < 3; ++c)
        for (int t = 0; t < 48; ++t) {
          double v = noise(g);
          if (k > 0 && c == k - 1) v += 2.0 * std::sin(2 * std::numbers::pi * 0.1 * k * t + ph);
          w.window.data[c * 48 + t] = static_cast<float>(v);
        }
      out.push_back(std::move(w));
    }
  return out;
}

std::vector<std::uint8_t> bytes_of(const AtcNet<double>& m) {
  return tensor::encode_checkpoint(m.to_checkpoint());
}

double brute_force_accuracy(const std::vector<std::vector<std::int64_t>>& cm) {
  double sum = 0;
  int present = 0;
  for (std::size_t i = 0; i < cm.size(); ++i) {
    std::int64_t support = 0;
    for (auto v : cm[i]) support += v;
    if (support == 0) continue;
    sum += static_cast<double>(cm[i][i]) / static_cast<double>(support);
    ++present;
  }
  return sum / present;
}

}  // namespace

TEST_CASE("accuracy worked example") {
  ConfusionMatrix cm;
  const int support[4] = {60, 20, 20, 20};
  const int tp[4] = {30, 10, 10, 20};
  for (int i = 0; i < 4; ++i) {
    cm.at(i, i) = tp[i];
    cm.at(i, (i + 1) % 4) = support[i] - tp[i];
  }
  const auto r = accuracy_from_confusion(cm);
  CHECK(r.accuracy == doctest::Approx(0.625).epsilon(1e-15));
  CHECK(r.per_class_recall[0] == 0.5);
  CHECK(r.per_class_recall[3] == 1.0);
  CHECK(r.warnings.empty());
  CHECK(plain_accuracy(cm) == doctest::Approx(70.0 / 120.0));
}

TEST_CASE("diagonal confusion scores one") {
  ConfusionMatrix cm;
  for (int i = 0; i < 4; ++i) cm.at(i, i) = 5 + i;
  CHECK(accuracy_from_confusion(cm).accuracy == 1.0);
}

TEST_CASE("absent classes are dropped with a warning") {
  ConfusionMatrix cm;
  cm.at(0, 0) = 3;
  cm.at(0, 1) = 1;
  cm.at(1, 1) = 2;
  const auto r = accuracy_from_confusion(cm);
  CHECK(r.accuracy == doctest::Approx((0.75 + 1.0) / 2));
  CHECK(std::isnan(r.per_class_recall[2]));
  CHECK(std::isnan(r.per_class_recall[3]));
  CHECK_FALSE(r.warnings.empty());
}

TEST_CASE("all-N predictions on a mixed run") {
  std::vector<MiClass> truth{MiClass::N, MiClass::N, MiClass::R, MiClass::L, MiClass::K, MiClass::R};
  std::vector<MiClass> pred(truth.size(), MiClass::N);
  const auto r = accuracy_from_confusion(confusion_from(truth, pred));
  CHECK(r.accuracy == doctest::Approx(1.0 / 4 * 1.0));
}

TEST_CASE("accuracy matches a brute-force oracle on random confusion matrices") {
  std::mt19937_64 g(2024);
  std::uniform_int_distribution<int> count(0, 50);
  std::bernoulli_distribution empty_row(0.1);
  int checked = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    ConfusionMatrix cm;
    std::vector<std::vector<std::int64_t>> raw(4, std::vector<std::int64_t>(4));
    bool any = false;
    for (int i = 0; i < 4; ++i) {
      const bool skip = empty_row(g);
      for (int j = 0; j < 4; ++j) {
        raw[i][j] = skip ? 0 : count(g);
        cm.at(i, j) = raw[i][j];
        any = any || raw[i][j] > 0;
      }
    }
    if (!any) continue;
    REQUIRE(accuracy_from_confusion(cm).accuracy == brute_force_accuracy(raw));
    ++checked;
  }
  CHECK(checked > 990);
}

TEST_CASE("balanced data: class-averaged recall equals plain accuracy") {
  std::mt19937_64 g(5);
  std::uniform_int_distribution<int> cls(0, 3);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<MiClass> truth, pred;
    for (int k = 0; k < 4; ++k)
      for (int i = 0; i < 37; ++i) {
        truth.push_back(kAllClasses[k]);
        pred.push_back(kAllClasses[cls(g)]);
      }
    const auto cm = confusion_from(truth, pred);
    REQUIRE(std::abs(accuracy_from_confusion(cm).accuracy - plain_accuracy(cm)) <= 1e-12);
  }
}

TEST_CASE("uniform random predictions score about one quarter") {
  std::mt19937_64 g(9);
  std::uniform_int_distribution<int> cls(0, 3);
  std::vector<MiClass> truth, pred;
  for (int i = 0; i < 10000; ++i) {
    truth.push_back(i < 4000 ? MiClass::N : kAllClasses[1 + i % 3]);
    pred.push_back(kAllClasses[cls(g)]);
  }
  CHECK(std::abs(accuracy_from_confusion(confusion_from(truth, pred)).accuracy - 0.25) <= 0.03);
}

TEST_CASE("report JSON layout") {
  ConfusionMatrix cm;
  cm.at(0, 0) = 2;
  cm.at(1, 0) = 1;
  auto r = accuracy_from_confusion(cm);
  r.run_timeline = {{0, 0.5}, {1, 0.75}};
  const auto j = r.to_json();
  CHECK(j["format"] == "mipilot-report/1");
  CHECK(j["accuracy"].get<double>() == doctest::Approx(0.5));
  CHECK(j["confusion"].size() == 4);
  CHECK(j["timeline"].size() == 2);
  CHECK(j["per_class_recall"]["L"].is_null());
}

TEST_CASE("argmax labels and confusion length check") {
  std::vector<std::array<double, 4>> p{{0.1, 0.2, 0.6, 0.1}, {0.4, 0.3, 0.2, 0.1}};
  const auto l = argmax_labels(p);
  CHECK(l == std::vector<MiClass>{MiClass::L, MiClass::N});
  std::vector<MiClass> a{MiClass::N};
  CHECK_THROWS_AS(confusion_from(a, l), ArgumentError);
}

TEST_CASE("train config validation") {
  TrainConfig c;
  CHECK(c.epochs == 500);
  CHECK(TrainConfig::pretrain_short().epochs == 200);
  CHECK(TrainConfig::finetune_default().epochs == 15);
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), ArgumentError);
  c = TrainConfig{};
  c.epochs = -1;
  CHECK_THROWS_AS(c.validate(), ArgumentError);
  c = TrainConfig{};
  c.lr = 0;
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("empty training data is rejected") {
  AtcNet<double> m(small_model());
  std::vector<LabeledWindow> none;
  TrainConfig c;
  c.epochs = 1;
  CHECK_THROWS_AS(pretrain(m, std::span<const LabeledWindow>(none), c), TrainingError);
}

TEST_CASE("fine-tuning requires a frozen model") {
  AtcNet<double> m(small_model());
  const auto data = separable_data(2, 1);
  TrainConfig c;
  c.epochs = 1;
  CHECK_THROWS_AS(finetune(m, std::span<const LabeledWindow>(data), c), ContractError);
  m.freeze_for_finetune();
  CHECK_NOTHROW(finetune(m, std::span<const LabeledWindow>(data), c));
}

TEST_CASE("zero epochs leaves the model identical") {
  AtcNet<double> m(small_model());
  const auto before = bytes_of(m);
  const auto data = separable_data(2, 1);
  TrainConfig c;
  c.epochs = 0;
  CHECK(pretrain(m, std::span<const LabeledWindow>(data), c).epoch_loss.empty());
  CHECK(bytes_of(m) == before);
  m.freeze_for_finetune();
  finetune(m, std::span<const LabeledWindow>(data), c);
  CHECK(bytes_of(m) == before);
}

TEST_CASE("zero learning rate leaves learnable parameters unchanged") {
  AtcNet<double> m(small_model());
  std::map<std::string, std::vector<double>> before;
  for (const auto& p : m.params()) before[p->name] = p->value.storage();
  const auto data = separable_data(4, 2);
  TrainConfig c;
  c.epochs = 2;
  c.batch_size = 4;
  c.lr = 0;
  pretrain(m, std::span<const LabeledWindow>(data), c);
  for (const auto& p : m.params())
    if (!p->is_state) CHECK(p->value.storage() == before[p->name]);
}

TEST_CASE("fine-tuning keeps frozen parameters bit-identical") {
  AtcNet<double> m(small_model());
  m.freeze_for_finetune();
  std::map<std::string, std::vector<double>> before;
  for (const auto& p : m.params()) before[p->name] = p->value.storage();
  const auto data = separable_data(4, 3);
  TrainConfig c;
  c.epochs = 2;
  c.batch_size = 8;
  finetune(m, std::span<const LabeledWindow>(data), c);
  bool head_changed = false;
  for (const auto& p : m.params()) {
    if (!atcnet::is_finetune_parameter(p->name)) CHECK(p->value.storage() == before[p->name]);
    if (p->name == "head.dense.weight") head_changed = p->value.storage() != before[p->name];
  }
  CHECK(head_changed);
}

TEST_CASE("same seed, data and config give identical checkpoint bytes") {
  const auto data = separable_data(4, 4);
  TrainConfig c;
  c.epochs = 2;
  c.batch_size = 6;
  c.seed = 17;
  auto cfg = opcases::tiny_model(atcnet::Fusion::mean_logit);
  AtcNet<double> a(cfg), b(cfg);
  const auto la = pretrain(a, std::span<const LabeledWindow>(data), c);
  const auto lb = pretrain(b, std::span<const LabeledWindow>(data), c);
  CHECK(la.epoch_loss == lb.epoch_loss);
  CHECK(bytes_of(a) == bytes_of(b));
  c.seed = 18;
  AtcNet<double> other(cfg);
  pretrain(other, std::span<const LabeledWindow>(data), c);
  CHECK(bytes_of(other) != bytes_of(a));
}

TEST_CASE("one epoch on one batch reduces that batch's loss") {
  AtcNet<double> m(small_model());
  const auto data = separable_data(2, 6);
  std::vector<const LabeledWindow*> batch;
  for (const auto& w : data) batch.push_back(&w);
  tensor::Rng rng(0);
  const auto span = std::span<const LabeledWindow* const>(batch);
  const double before = batch_loss(m, span, tensor::Mode::eval, rng, false);
  TrainConfig c;
  c.epochs = 1;
  c.batch_size = static_cast<int>(data.size());
  c.lr = 0.01;
  pretrain(m, std::span<const LabeledWindow>(data), c);
  CHECK(batch_loss(m, span, tensor::Mode::eval, rng, false) < before);
}

TEST_CASE("loss trends down on separable data and the model learns it") {
  AtcNet<double> m(small_model());
  const auto data = separable_data(24, 7);
  TrainConfig c;
  c.epochs = 15;
  c.batch_size = 16;
  c.lr = 0.01;
  const auto r = pretrain(m, std::span<const LabeledWindow>(data), c);
  REQUIRE(r.epoch_loss.size() == 15);
  for (std::size_t e = 5; e < r.epoch_loss.size(); ++e) {
    double window = 0;
    for (std::size_t k = e - 4; k <= e; ++k) window += r.epoch_loss[k];
    CHECK(window / 5 <= r.epoch_loss[0]);
  }
  const auto test = separable_data(10, 99);
  CHECK(evaluate(m, std::span<const LabeledWindow>(test)).accuracy >= 0.8);
}

TEST_CASE("probabilities and timelines") {
  AtcNet<double> m(small_model());
  const auto data = separable_data(3, 8);
  const auto p = predict_probabilities(m, std::span<const LabeledWindow>(data), 5);
  REQUIRE(p.size() == data.size());
  for (const auto& row : p) CHECK(row[0] + row[1] + row[2] + row[3] == doctest::Approx(1.0));
  std::vector<std::vector<LabeledWindow>> runs{data, data};
  const auto t = per_run_timeline(m, std::span<const std::vector<LabeledWindow>>(runs));
  REQUIRE(t.size() == 2);
  CHECK(t[0].first == 0);
  CHECK(t[1].first == 1);
  CHECK(t[0].second == t[1].second);
}

TEST_CASE("windows that do not match the model input are rejected") {
  AtcNet<double> m(small_model());
  auto data = separable_data(1, 1);
  data[0].window.length = 47;
  data[0].window.data.resize(3 * 47);
  CHECK_THROWS_AS(evaluate(m, std::span<const LabeledWindow>(data)), ShapeError);
}
