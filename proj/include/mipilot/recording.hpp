#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mipilot/windowing.hpp"

namespace mipilot::session {

struct CueEvent {
  std::int64_t t_start_sample = 0;
  MiClass label = MiClass::N;

  bool operator==(const CueEvent&) const = default;
};

// Continuous multichannel recording plus its cue track ("EEGR" file).
struct Recording {
  int channels = kChannels;
  int rate_hz = kSampleRateHz;
  std::vector<float> samples;  // interleaved, frame-major
  std::vector<CueEvent> cues;

  std::int64_t sample_count() const {
    return channels == 0 ? 0 : static_cast<std::int64_t>(samples.size()) / channels;
  }
  windowing::SampleFrame frame(std::int64_t index) const;
  // Task segments implied by the cues; every task lasts `task_samples`.
  std::vector<windowing::TaskSegment> segments(
      std::int64_t task_samples = windowing::kWindowLength) const;

  bool operator==(const Recording&) const = default;
};

std::vector<std::uint8_t> encode_recording(const Recording& rec);
Recording decode_recording(std::span<const std::uint8_t> bytes);
void write_recording(const std::string& path, const Recording& rec);
Recording read_recording(const std::string& path);

}  // namespace mipilot::session
