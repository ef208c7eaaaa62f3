#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "mipilot/recording.hpp"

namespace mipilot::session {

// A sequence is a no-movement task followed by one movement task.
enum class SequenceKind : std::uint8_t { NR, NL, NK };

MiClass movement_of(SequenceKind k);
std::string to_string(SequenceKind k);

struct SessionPlan {
  int datasets = 1;
  int runs_per_dataset = 6;
  int sequences_per_run = 9;
  std::vector<std::vector<SequenceKind>> runs;  // datasets * runs_per_dataset entries
  double task_seconds = 7.0;
  double rest_seconds = 30.0;  // before the first run and between runs
  double inter_sequence_gap_seconds = 0.0;
  int rate_hz = kSampleRateHz;
  std::uint64_t seed = 0;

  std::int64_t task_samples() const;
  std::int64_t total_samples() const;
  std::vector<CueEvent> cues() const;
  std::vector<windowing::TaskSegment> segments() const;
  int tasks_per_run() const { return 2 * sequences_per_run; }
  // Single-dataset plan holding the runs of dataset `index`, with its own derived seed.
  SessionPlan dataset(int index) const;

  nlohmann::json to_json() const;
  static SessionPlan from_json(const nlohmann::json& j);
};

// Seeded random order of three NR, three NL and three NK sequences in every run.
SessionPlan generate_plan(int datasets, std::uint64_t seed);

}  // namespace mipilot::session
