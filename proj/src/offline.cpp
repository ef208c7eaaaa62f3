#include "mipilot/offline.hpp"

namespace mipilot::offline {

using windowing::LabeledWindow;
using windowing::Window;

void stream_windows(const session::Recording& rec, const dsp::FirFilter& filter, int window_length,
                    int hop_samples, const std::function<void(Window&&)>& sink) {
  if (rec.channels != kChannels)
    throw ArgumentError("recordings must have " + std::to_string(kChannels) + " channels");
  dsp::StreamFilter stream(filter, rec.channels);
  windowing::RingBuffer ring(window_length);
  std::array<double, kChannels> buf{};
  windowing::SampleFrame frame;
  const std::int64_t n = rec.sample_count();
  for (std::int64_t i = 0; i < n; ++i) {
    const float* src = rec.samples.data() + i * kChannels;
    for (int c = 0; c < kChannels; ++c) buf[c] = src[c];
    stream.process_frame(buf);
    frame.index = i;
    for (int c = 0; c < kChannels; ++c) frame.channels[c] = static_cast<float>(buf[c]);
    if (auto w = ring.push_and_maybe_window(frame, hop_samples)) sink(std::move(*w));
  }
}

CutResult cut_windows(const session::Recording& rec, const dsp::FirFilter& filter,
                      int window_length, bool exclude_first, int tasks_per_run,
                      std::int64_t task_samples) {
  if (tasks_per_run < 1) throw ArgumentError("tasks_per_run must be positive");
  const auto segments = rec.segments(task_samples);
  std::vector<Window> kept;
  stream_windows(rec, filter, window_length, windowing::kHopSamples, [&](Window&& w) {
    if (windowing::inside_any(segments, w.end_index)) kept.push_back(std::move(w));
  });
  std::vector<std::int64_t> ends;
  ends.reserve(kept.size());
  for (const auto& w : kept) ends.push_back(w.end_index);
  const auto labels = windowing::label_ends(ends, segments, exclude_first);

  CutResult out;
  out.windows.reserve(labels.size());
  for (const auto& l : labels) {
    out.windows.push_back({std::move(kept[l.window]), l.label, l.ordinal});
    out.run.push_back(static_cast<int>(l.segment) / tasks_per_run);
  }
  return out;
}

std::vector<std::vector<LabeledWindow>> group_by_run(CutResult cut) {
  std::vector<std::vector<LabeledWindow>> runs;
  for (std::size_t i = 0; i < cut.windows.size(); ++i) {
    const auto r = static_cast<std::size_t>(cut.run[i]);
    if (runs.size() <= r) runs.resize(r + 1);
    runs[r].push_back(std::move(cut.windows[i]));
  }
  return runs;
}

}  // namespace mipilot::offline
