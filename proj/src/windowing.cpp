#include "mipilot/windowing.hpp"

#include <algorithm>
#include <random>

namespace mipilot::windowing {

RingBuffer::RingBuffer(int window_length, int capacity)
    : window_length_(window_length), capacity_(std::max(capacity, window_length)) {
  if (window_length < 1) throw ArgumentError("window length must be positive");
  store_.assign(static_cast<std::size_t>(capacity_) * kChannels, 0.0f);
}

std::optional<Window> RingBuffer::push_and_maybe_window(const SampleFrame& frame,
                                                        int hop_samples) {
  if (hop_samples < 1) throw ArgumentError("hop must be >= 1");
  if (frames_seen_ > 0 && frame.index != next_index_)
    throw GapError("frame index " + std::to_string(frame.index) + " arrived, expected " +
                   std::to_string(next_index_));
  next_index_ = frame.index + 1;

  const auto slot = static_cast<std::size_t>(frames_seen_ % capacity_);
  std::copy(frame.channels.begin(), frame.channels.end(), store_.begin() + slot * kChannels);
  ++frames_seen_;

  if (frames_seen_ < window_length_ || (frames_seen_ - window_length_) % hop_samples != 0)
    return std::nullopt;

  Window w;
  w.length = window_length_;
  w.end_index = frame.index;
  w.data.resize(static_cast<std::size_t>(kChannels) * static_cast<std::size_t>(window_length_));
  const std::int64_t first = frames_seen_ - window_length_;
  for (int t = 0; t < window_length_; ++t) {
    const auto src = static_cast<std::size_t>((first + t) % capacity_) * kChannels;
    for (int c = 0; c < kChannels; ++c)
      w.data[static_cast<std::size_t>(c) * static_cast<std::size_t>(window_length_) +
             static_cast<std::size_t>(t)] = store_[src + static_cast<std::size_t>(c)];
  }
  return w;
}

std::int64_t expected_window_count(std::int64_t frames, int window_length, int hop_samples) {
  if (frames < window_length) return 0;
  return (frames - window_length) / hop_samples + 1;
}

namespace {

// Position of the segment containing `index`, if any.
std::optional<std::size_t> find_segment(std::span<const TaskSegment> segments,
                                        std::int64_t index) {
  auto it = std::upper_bound(segments.begin(), segments.end(), index,
                             [](std::int64_t i, const TaskSegment& s) { return i < s.start_index; });
  if (it == segments.begin()) return std::nullopt;
  --it;
  if (!it->contains(index)) return std::nullopt;
  return static_cast<std::size_t>(it - segments.begin());
}

}  // namespace

bool inside_any(std::span<const TaskSegment> segments, std::int64_t index) {
  return find_segment(segments, index).has_value();
}

std::vector<WindowLabel> label_ends(std::span<const std::int64_t> end_indices,
                                    std::span<const TaskSegment> segments, bool exclude_first) {
  for (std::size_t i = 1; i < segments.size(); ++i) {
    if (segments[i].start_index < segments[i - 1].end_index())
      throw LabelingError("task segments overlap or are unsorted at segment " + std::to_string(i));
  }
  std::vector<int> seen(segments.size(), 0);
  std::vector<WindowLabel> out;
  out.reserve(end_indices.size());
  for (std::size_t w = 0; w < end_indices.size(); ++w) {
    const auto seg = find_segment(segments, end_indices[w]);
    if (!seg)
      throw LabelingError("window ending at sample " + std::to_string(end_indices[w]) +
                          " lies outside every task segment");
    const int ordinal = ++seen[*seg];
    if (exclude_first && ordinal == 1) continue;
    out.push_back({w, segments[*seg].label, ordinal, *seg});
  }
  return out;
}

std::vector<LabeledWindow> label_stream(std::vector<Window> windows,
                                        std::span<const TaskSegment> segments, bool exclude_first) {
  std::vector<std::int64_t> ends;
  ends.reserve(windows.size());
  for (const auto& w : windows) ends.push_back(w.end_index);
  std::vector<LabeledWindow> out;
  for (const auto& l : label_ends(ends, segments, exclude_first))
    out.push_back({std::move(windows[l.window]), l.label, l.ordinal});
  return out;
}

std::vector<std::size_t> balance_indices(std::span<const MiClass> labels, std::uint64_t seed) {
  std::array<std::vector<std::size_t>, kNumClasses> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[class_index(labels[i])].push_back(i);
  std::size_t minority = labels.size();
  for (int c = 0; c < kNumClasses; ++c) {
    if (by_class[c].empty())
      throw BalancingError(std::string("no windows for class ") +
                           class_letter(static_cast<MiClass>(c)));
    minority = std::min(minority, by_class[c].size());
  }
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> keep;
  keep.reserve(minority * kNumClasses);
  for (auto& members : by_class) {
    std::shuffle(members.begin(), members.end(), rng);
    keep.insert(keep.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(minority));
  }
  std::sort(keep.begin(), keep.end());
  return keep;
}

std::vector<LabeledWindow> balance_classes(std::vector<LabeledWindow> windows, std::uint64_t seed) {
  std::vector<MiClass> labels;
  labels.reserve(windows.size());
  for (const auto& w : windows) labels.push_back(w.label);
  std::vector<LabeledWindow> out;
  for (std::size_t i : balance_indices(labels, seed)) out.push_back(std::move(windows[i]));
  return out;
}

std::array<std::size_t, kNumClasses> class_counts(std::span<const LabeledWindow> windows) {
  std::array<std::size_t, kNumClasses> counts{};
  for (const auto& w : windows) ++counts[class_index(w.label)];
  return counts;
}

}  // namespace mipilot::windowing
