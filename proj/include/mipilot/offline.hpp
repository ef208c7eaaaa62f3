#pragma once

#include <functional>
#include <vector>

#include "mipilot/dsp.hpp"
#include "mipilot/recording.hpp"
#include "mipilot/windowing.hpp"

namespace mipilot::offline {

// Streams a recording through the per-channel filter and the ring buffer, calling `sink` for
// every window in emission order. This is the same path the live decoder takes.
void stream_windows(const session::Recording& rec, const dsp::FirFilter& filter, int window_length,
                    int hop_samples, const std::function<void(windowing::Window&&)>& sink);

struct CutResult {
  std::vector<windowing::LabeledWindow> windows;
  std::vector<int> run;  // run index of each window
};

// Labeled windows of a recording: windows whose newest sample lies inside a cued task, labeled
// by that task. Tasks are grouped into runs of `tasks_per_run` consecutive cues.
CutResult cut_windows(const session::Recording& rec, const dsp::FirFilter& filter,
                      int window_length, bool exclude_first, int tasks_per_run = 18,
                      std::int64_t task_samples = windowing::kWindowLength);

// Windows grouped by run, in run order.
std::vector<std::vector<windowing::LabeledWindow>> group_by_run(CutResult cut);

}  // namespace mipilot::offline
