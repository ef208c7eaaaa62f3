#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mipilot/common.hpp"

namespace mipilot::windowing {

inline constexpr int kWindowSeconds = 7;
inline constexpr int kWindowLength = kWindowSeconds * kSampleRateHz;  // 1750
inline constexpr int kHopSamples = kSampleRateHz;                     // 1 Hz decoding

struct SampleFrame {
  std::int64_t index = 0;
  std::array<float, kChannels> channels{};
};

// C x T block of samples, row-major by channel, oldest sample first in each row.
struct Window {
  int channels = kChannels;
  int length = 0;
  std::int64_t end_index = 0;  // stream index of the newest sample
  std::vector<float> data;

  float at(int channel, int t) const {
    return data[static_cast<std::size_t>(channel) * static_cast<std::size_t>(length) +
                static_cast<std::size_t>(t)];
  }
};

// Fixed-capacity circular store of frames. Single producer, single consumer.
class RingBuffer {
 public:
  explicit RingBuffer(int window_length = kWindowLength, int capacity = 0);

  // Appends a frame; returns a window when `frames_seen() >= window_length` and
  // (frames_seen() - window_length) is a multiple of hop_samples.
  std::optional<Window> push_and_maybe_window(const SampleFrame& frame, int hop_samples);

  std::int64_t frames_seen() const { return frames_seen_; }
  int window_length() const { return window_length_; }
  int capacity() const { return capacity_; }

 private:
  int window_length_;
  int capacity_;
  std::vector<float> store_;  // capacity x channels, frame-major
  std::int64_t frames_seen_ = 0;
  std::int64_t next_index_ = 0;
};

// floor((frames - window_length) / hop) + 1 for frames >= window_length, else 0.
std::int64_t expected_window_count(std::int64_t frames, int window_length, int hop_samples);

struct TaskSegment {
  MiClass label = MiClass::N;
  std::int64_t start_index = 0;
  std::int64_t duration_samples = kWindowLength;

  std::int64_t end_index() const { return start_index + duration_samples; }  // exclusive
  bool contains(std::int64_t i) const { return i >= start_index && i < end_index(); }
};

struct WindowLabel {
  std::size_t window = 0;  // position in the input sequence
  MiClass label = MiClass::N;
  int ordinal = 0;         // 1-based position among the windows ending inside the segment
  std::size_t segment = 0;
};

struct LabeledWindow {
  Window window;
  MiClass label = MiClass::N;
  int ordinal = 0;
};

// Labels window end indices by the segment that owns them. Segments must be sorted and
// non-overlapping. With exclude_first, the earliest window of every segment is dropped.
std::vector<WindowLabel> label_ends(std::span<const std::int64_t> end_indices,
                                    std::span<const TaskSegment> segments, bool exclude_first);

std::vector<LabeledWindow> label_stream(std::vector<Window> windows,
                                        std::span<const TaskSegment> segments, bool exclude_first);

// True when `index` falls inside some segment (segments sorted).
bool inside_any(std::span<const TaskSegment> segments, std::int64_t index);

// Indices (ascending) of a class-balanced subset: every class undersampled uniformly at random
// to the minority count.
std::vector<std::size_t> balance_indices(std::span<const MiClass> labels, std::uint64_t seed);

std::vector<LabeledWindow> balance_classes(std::vector<LabeledWindow> windows, std::uint64_t seed);

std::array<std::size_t, kNumClasses> class_counts(std::span<const LabeledWindow> windows);

// "MIDS" labeled dataset file.
std::vector<std::uint8_t> encode_dataset(std::span<const LabeledWindow> windows);
std::vector<LabeledWindow> decode_dataset(std::span<const std::uint8_t> bytes);
void write_dataset(const std::string& path, std::span<const LabeledWindow> windows);
std::vector<LabeledWindow> read_dataset(const std::string& path);

}  // namespace mipilot::windowing
