#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "json.hpp"
#include "mipilot/atcnet.hpp"
#include "mipilot/dsp.hpp"
#include "mipilot/net.hpp"
#include "mipilot/recording.hpp"
#include "mipilot/training.hpp"
#include "mipilot/windowing.hpp"

namespace mipilot::realtime {

using tensor::Real;
using windowing::SampleFrame;
using windowing::Window;

struct CommandMsg {
  std::int64_t seq = 0;
  std::int64_t t_ms = 0;  // sample clock: time just after the newest sample of the window
  MiClass cmd = MiClass::N;
  std::array<double, kNumClasses> probs{};
  std::int64_t end_index = 0;

  bool operator==(const CommandMsg&) const = default;
};

inline std::int64_t tick_time_ms(std::int64_t end_index, int rate_hz = kSampleRateHz) {
  return (end_index + 1) * 1000 / rate_hz;
}

class FrameSource {
 public:
  virtual ~FrameSource() = default;
  // Next raw frame, or nullopt at end of stream.
  virtual std::optional<SampleFrame> next() = 0;
};

// Frames of a recording, optionally paced at the recording's sample rate.
class RecordingSource : public FrameSource {
 public:
  explicit RecordingSource(const session::Recording& rec, bool paced = false);
  std::optional<SampleFrame> next() override;

 private:
  const session::Recording& rec_;
  bool paced_;
  std::int64_t pos_ = 0;
  std::chrono::steady_clock::time_point start_;
};

// Frame stream over TCP: an EEGR header (sample count 0 when open-ended) followed by frames of
// 16 little-endian f32 values until the peer closes.
class TcpFrameSource : public FrameSource {
 public:
  explicit TcpFrameSource(const net::Endpoint& ep);
  std::optional<SampleFrame> next() override;
  int rate_hz() const { return rate_hz_; }

 private:
  net::TcpStream stream_;
  std::string pending_;
  std::int64_t pos_ = 0;
  std::int64_t count_ = 0;
  int rate_hz_ = kSampleRateHz;
};

// Writes a recording to `stream` in the TcpFrameSource format.
void send_frames(net::TcpStream& stream, const session::Recording& rec, bool paced);

// Filter, ring buffer and model of one decoder. ingest() and decode() may run on different
// threads as long as each is called from a single one.
template <Real S>
class DecoderRuntime {
 public:
  DecoderRuntime(dsp::FirFilter filter, atcnet::AtcNet<S> model,
                 int hop_samples = windowing::kHopSamples);

  // Filters one raw frame into the buffer; returns a window on every hop boundary after fill.
  std::optional<Window> ingest(const SampleFrame& raw);
  CommandMsg decode(const Window& window);
  std::optional<CommandMsg> push(const SampleFrame& raw);

  int hop_samples() const { return hop_; }
  atcnet::AtcNet<S>& model() { return model_; }

 private:
  dsp::StreamFilter filter_;
  windowing::RingBuffer ring_;
  atcnet::AtcNet<S> model_;
  int hop_;
  std::int64_t seq_ = 0;
};

struct PipelineOptions {
  bool live = false;                // threaded ingestion; late ticks are dropped
  bool exclude_first_window = true;  // for scoring only; every tick still produces a command
  std::vector<windowing::TaskSegment> segments;  // truth for scoring; empty disables scoring
  int tasks_per_run = 18;
};

struct LoopStats {
  std::vector<double> inference_ms;
  std::vector<double> end_to_end_ms;  // newest sample ingested -> command handed to the sink
  std::int64_t dropped_ticks = 0;
  std::int64_t frames = 0;
  std::vector<CommandMsg> commands;
  // Filled when scoring: cued label of each tick (nullopt outside tasks) and whether it counts.
  std::vector<std::optional<MiClass>> truth;
  std::vector<bool> scored;
  std::optional<training::AccuracyReport> score;

  nlohmann::json to_json() const;
};

using CommandSink = std::function<void(const CommandMsg&)>;

template <Real S>
LoopStats run_pipeline(FrameSource& source, DecoderRuntime<S>& runtime, const CommandSink& sink,
                       const PipelineOptions& options = {});

// Eq.-3 accuracy of issued commands against the cued tasks, with a per-run timeline.
training::AccuracyReport score_commands(std::span<const CommandMsg> commands,
                                        std::span<const windowing::TaskSegment> segments,
                                        bool exclude_first, int tasks_per_run = 18);

}  // namespace mipilot::realtime
