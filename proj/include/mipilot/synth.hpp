#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mipilot/session.hpp"

namespace mipilot::session {

// Channel order of the 16-electrode montage.
inline constexpr const char* kMontage[kChannels] = {"C3",  "Cz",  "C4",  "AF3", "AF4", "P3",
                                                    "P4",  "POz", "C5",  "FC3", "CP3", "C1",
                                                    "C2",  "FC4", "CP4", "C6"};

// Multiplies the power envelope of one narrow band on one channel while `cls` is cued.
struct BandModulation {
  MiClass cls = MiClass::N;
  int channel = 0;
  double center_hz = 10.0;
  double bandwidth_hz = 2.0;
  double gain = 1.0;  // amplitude factor; below one is a desynchronization
};

struct SynthConfig {
  std::string user_id = "A";
  int day = 0;
  std::vector<BandModulation> signature;
  double band_amplitude_uv = 10.0;  // baseline RMS of each modulated band
  double background_uv = 8.0;       // 1/f-like background RMS
  double noise_sigma_uv = 2.0;      // white sensor noise
  double drift_uv_per_s = 0.5;      // slow linear drift, random sign per channel
  double dc_offset_uv = 20.0;       // max per-channel constant offset
  // Day shift: the signature written for channel c lands on channel_map[c] (identity if empty),
  // with modulation depth scaled by day_depth.
  std::vector<int> channel_map;
  double day_depth = 1.0;
  std::uint64_t seed = 0;

  // Throws ArgumentError unless gains are finite, channels valid, and every class pair is
  // distinguished by at least one modulation.
  void validate() const;
};

// Built-in profiles named like "userA_day1". Day 0 is the reference day; later days remap the
// signature channels and rescale modulation depth.
SynthConfig profile(const std::string& name);

// Continuous recording covering every task and rest of the plan, deterministic in (plan, cfg).
Recording synth_eeg(const SessionPlan& plan, const SynthConfig& cfg);

}  // namespace mipilot::session
