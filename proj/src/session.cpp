#include "mipilot/session.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace mipilot::session {

MiClass movement_of(SequenceKind k) {
  switch (k) {
    case SequenceKind::NR: return MiClass::R;
    case SequenceKind::NL: return MiClass::L;
    case SequenceKind::NK: return MiClass::K;
  }
  return MiClass::N;
}

std::string to_string(SequenceKind k) {
  return std::string("N") + class_letter(movement_of(k));
}

namespace {
std::int64_t seconds_to_samples(double s, int rate) {
  return static_cast<std::int64_t>(std::llround(s * rate));
}
}  // namespace

std::int64_t SessionPlan::task_samples() const { return seconds_to_samples(task_seconds, rate_hz); }

std::vector<CueEvent> SessionPlan::cues() const {
  const std::int64_t task = task_samples();
  const std::int64_t rest = seconds_to_samples(rest_seconds, rate_hz);
  const std::int64_t gap = seconds_to_samples(inter_sequence_gap_seconds, rate_hz);
  std::vector<CueEvent> out;
  std::int64_t t = rest;
  for (std::size_t r = 0; r < runs.size(); ++r) {
    if (r > 0) t += rest;
    for (std::size_t s = 0; s < runs[r].size(); ++s) {
      if (s > 0) t += gap;
      out.push_back({t, MiClass::N});
      t += task;
      out.push_back({t, movement_of(runs[r][s])});
      t += task;
    }
  }
  return out;
}

std::int64_t SessionPlan::total_samples() const {
  const auto c = cues();
  return c.empty() ? seconds_to_samples(rest_seconds, rate_hz) : c.back().t_start_sample + task_samples();
}

std::vector<windowing::TaskSegment> SessionPlan::segments() const {
  std::vector<windowing::TaskSegment> out;
  for (const auto& c : cues()) out.push_back({c.label, c.t_start_sample, task_samples()});
  return out;
}

SessionPlan SessionPlan::dataset(int index) const {
  if (index < 0 || index >= datasets)
    throw ArgumentError("dataset " + std::to_string(index) + " not in plan of " +
                        std::to_string(datasets));
  SessionPlan p = *this;
  p.datasets = 1;
  p.seed = seed + 0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(index + 1);
  p.runs.assign(runs.begin() + index * runs_per_dataset, runs.begin() + (index + 1) * runs_per_dataset);
  return p;
}

nlohmann::json SessionPlan::to_json() const {
  nlohmann::json runs_json = nlohmann::json::array();
  for (const auto& run : runs) {
    nlohmann::json r = nlohmann::json::array();
    for (auto k : run) r.push_back(to_string(k));
    runs_json.push_back(std::move(r));
  }
  return {{"format", "mipilot-plan/1"},
          {"datasets", datasets},
          {"runs_per_dataset", runs_per_dataset},
          {"sequences_per_run", sequences_per_run},
          {"task_seconds", task_seconds},
          {"rest_seconds", rest_seconds},
          {"inter_sequence_gap_seconds", inter_sequence_gap_seconds},
          {"rate_hz", rate_hz},
          {"seed", seed},
          {"runs", std::move(runs_json)}};
}

SessionPlan SessionPlan::from_json(const nlohmann::json& j) {
  try {
    SessionPlan p;
    p.datasets = j.at("datasets").get<int>();
    p.runs_per_dataset = j.at("runs_per_dataset").get<int>();
    p.sequences_per_run = j.at("sequences_per_run").get<int>();
    p.task_seconds = j.at("task_seconds").get<double>();
    p.rest_seconds = j.at("rest_seconds").get<double>();
    p.inter_sequence_gap_seconds = j.value("inter_sequence_gap_seconds", 0.0);
    p.rate_hz = j.at("rate_hz").get<int>();
    p.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& r : j.at("runs")) {
      std::vector<SequenceKind> run;
      for (const auto& k : r) {
        const auto s = k.get<std::string>();
        if (s == "NR") run.push_back(SequenceKind::NR);
        else if (s == "NL") run.push_back(SequenceKind::NL);
        else if (s == "NK") run.push_back(SequenceKind::NK);
        else throw FormatError("plan: unknown sequence kind '" + s + "'");
      }
      p.runs.push_back(std::move(run));
    }
    if (static_cast<int>(p.runs.size()) != p.datasets * p.runs_per_dataset)
      throw FormatError("plan: run count does not match datasets x runs_per_dataset");
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("plan: ") + e.what());
  }
}

SessionPlan generate_plan(int datasets, std::uint64_t seed) {
  if (datasets < 1) throw ArgumentError("a plan needs at least one dataset");
  SessionPlan plan;
  plan.datasets = datasets;
  plan.seed = seed;
  std::mt19937_64 rng(seed);
  for (int r = 0; r < datasets * plan.runs_per_dataset; ++r) {
    std::vector<SequenceKind> run;
    for (auto k : {SequenceKind::NR, SequenceKind::NL, SequenceKind::NK})
      for (int i = 0; i < plan.sequences_per_run / 3; ++i) run.push_back(k);
    std::shuffle(run.begin(), run.end(), rng);
    plan.runs.push_back(std::move(run));
  }
  return plan;
}

}  // namespace mipilot::session
