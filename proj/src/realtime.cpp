#include "mipilot/realtime.hpp"

#include <condition_variable>
#include <map>
#include <mutex>
#include <thread>

#include "mipilot/binary_io.hpp"

namespace mipilot::realtime {

using Clock = std::chrono::steady_clock;

namespace {
double ms_between(Clock::time_point a, Clock::time_point b) {
  return std::chrono::duration<double, std::milli>(b - a).count();
}
}  // namespace

RecordingSource::RecordingSource(const session::Recording& rec, bool paced)
    : rec_(rec), paced_(paced), start_(Clock::now()) {
  if (rec.channels != kChannels)
    throw ArgumentError("recordings must have " + std::to_string(kChannels) + " channels");
}

std::optional<SampleFrame> RecordingSource::next() {
  if (pos_ >= rec_.sample_count()) return std::nullopt;
  if (paced_) {
    const auto due = start_ + std::chrono::microseconds(pos_ * 1'000'000 / rec_.rate_hz);
    std::this_thread::sleep_until(due);
  }
  return rec_.frame(pos_++);
}

TcpFrameSource::TcpFrameSource(const net::Endpoint& ep) : stream_(net::TcpStream::connect(ep)) {
  const std::string header = stream_.read_exact(20);
  std::vector<std::uint8_t> bytes(header.begin(), header.end());
  io::Reader r(bytes, "frame stream");
  r.expect_magic("EEGR");
  const auto version = r.get<std::uint16_t>();
  if (version != 1) r.fail("unsupported version " + std::to_string(version), 4);
  const auto channels = r.get<std::uint16_t>();
  if (channels != kChannels) r.fail("expected 16 channels, got " + std::to_string(channels), 6);
  rate_hz_ = static_cast<int>(r.get<std::uint32_t>());
  count_ = static_cast<std::int64_t>(r.get<std::uint64_t>());
}

std::optional<SampleFrame> TcpFrameSource::next() {
  if (count_ > 0 && pos_ >= count_) return std::nullopt;
  constexpr std::size_t kFrameBytes = kChannels * sizeof(float);
  while (pending_.size() < kFrameBytes) {
    const auto chunk = stream_.read_some(8192);
    if (chunk.empty()) {
      if (!pending_.empty())
        throw FormatError("frame stream: partial frame at index " + std::to_string(pos_));
      return std::nullopt;
    }
    pending_ += chunk;
  }
  std::vector<std::uint8_t> bytes(pending_.begin(), pending_.begin() + kFrameBytes);
  pending_.erase(0, kFrameBytes);
  io::Reader r(bytes, "frame stream");
  SampleFrame f;
  f.index = pos_++;
  for (auto& v : f.channels) v = r.get<float>();
  return f;
}

void send_frames(net::TcpStream& stream, const session::Recording& rec, bool paced) {
  std::vector<std::uint8_t> out;
  io::put_bytes(out, "EEGR");
  io::put<std::uint16_t>(out, 1);
  io::put<std::uint16_t>(out, static_cast<std::uint16_t>(rec.channels));
  io::put<std::uint32_t>(out, static_cast<std::uint32_t>(rec.rate_hz));
  io::put<std::uint64_t>(out, static_cast<std::uint64_t>(rec.sample_count()));
  stream.write_all({reinterpret_cast<const char*>(out.data()), out.size()});
  const auto start = Clock::now();
  const std::int64_t n = rec.sample_count();
  const std::int64_t chunk = paced ? 1 : 250;
  for (std::int64_t i = 0; i < n; i += chunk) {
    out.clear();
    for (std::int64_t j = i; j < std::min(n, i + chunk); ++j)
      for (int c = 0; c < rec.channels; ++c) io::put<float>(out, rec.samples[j * rec.channels + c]);
    if (paced) std::this_thread::sleep_until(start + std::chrono::microseconds(i * 1'000'000 / rec.rate_hz));
    stream.write_all({reinterpret_cast<const char*>(out.data()), out.size()});
  }
  stream.shutdown_write();
}

template <Real S>
DecoderRuntime<S>::DecoderRuntime(dsp::FirFilter filter, atcnet::AtcNet<S> model, int hop_samples)
    : filter_(std::move(filter), kChannels),
      ring_(model.config().samples),
      model_(std::move(model)),
      hop_(hop_samples) {
  if (hop_ < 1) throw ArgumentError("hop must be at least one sample");
  if (model_.config().channels != kChannels)
    throw ArgumentError("decoder model must take " + std::to_string(kChannels) + " channels");
}

template <Real S>
std::optional<Window> DecoderRuntime<S>::ingest(const SampleFrame& raw) {
  std::array<double, kChannels> buf;
  for (int c = 0; c < kChannels; ++c) buf[c] = raw.channels[c];
  filter_.process_frame(buf);
  SampleFrame f;
  f.index = raw.index;
  for (int c = 0; c < kChannels; ++c) f.channels[c] = static_cast<float>(buf[c]);
  return ring_.push_and_maybe_window(f, hop_);
}

template <Real S>
CommandMsg DecoderRuntime<S>::decode(const Window& window) {
  windowing::LabeledWindow lw{window, MiClass::N, 0};
  const auto probs =
      training::predict_probabilities(model_, std::span<const windowing::LabeledWindow>(&lw, 1), 1);
  CommandMsg msg;
  msg.seq = ++seq_;
  msg.end_index = window.end_index;
  msg.t_ms = tick_time_ms(window.end_index);
  msg.probs = probs[0];
  msg.cmd = training::argmax_labels(probs)[0];
  return msg;
}

template <Real S>
std::optional<CommandMsg> DecoderRuntime<S>::push(const SampleFrame& raw) {
  if (auto w = ingest(raw)) return decode(*w);
  return std::nullopt;
}

namespace {

struct Pending {
  Window window;
  Clock::time_point ready;
};

}  // namespace

template <Real S>
LoopStats run_pipeline(FrameSource& source, DecoderRuntime<S>& runtime, const CommandSink& sink,
                       const PipelineOptions& options) {
  LoopStats stats;
  auto handle = [&](const Window& w, Clock::time_point ready) {
    const auto t0 = Clock::now();
    auto msg = runtime.decode(w);
    const auto t1 = Clock::now();
    if (sink) sink(msg);
    stats.inference_ms.push_back(ms_between(t0, t1));
    stats.end_to_end_ms.push_back(ms_between(ready, Clock::now()));
    stats.commands.push_back(std::move(msg));
  };

  if (!options.live) {
    while (auto f = source.next()) {
      ++stats.frames;
      if (auto w = runtime.ingest(*f)) handle(*w, Clock::now());
    }
  } else {
    std::mutex mu;
    std::condition_variable cv;
    std::optional<Pending> slot;
    bool done = false;
    std::exception_ptr error;
    std::int64_t dropped = 0, frames = 0;
    std::thread ingest([&] {
      try {
        while (auto f = source.next()) {
          ++frames;
          if (auto w = runtime.ingest(*f)) {
            std::lock_guard lock(mu);
            // The decoder has not taken the previous window yet: that tick is lost.
            if (slot) ++dropped;
            slot = Pending{std::move(*w), Clock::now()};
            cv.notify_one();
          }
        }
      } catch (...) {
        std::lock_guard lock(mu);
        error = std::current_exception();
      }
      std::lock_guard lock(mu);
      done = true;
      cv.notify_one();
    });
    while (true) {
      std::optional<Pending> job;
      {
        std::unique_lock lock(mu);
        cv.wait(lock, [&] { return slot.has_value() || done; });
        if (!slot) break;
        job = std::move(slot);
        slot.reset();
      }
      try {
        handle(job->window, job->ready);
      } catch (...) {
        ingest.join();
        throw;
      }
    }
    ingest.join();
    if (error) std::rethrow_exception(error);
    stats.dropped_ticks = dropped;
    stats.frames = frames;
  }
  if (!options.segments.empty()) {
    const auto& segs = options.segments;
    std::vector<std::int64_t> ends;
    std::vector<std::size_t> where;
    stats.truth.assign(stats.commands.size(), std::nullopt);
    stats.scored.assign(stats.commands.size(), false);
    for (std::size_t i = 0; i < stats.commands.size(); ++i)
      if (windowing::inside_any(segs, stats.commands[i].end_index)) {
        ends.push_back(stats.commands[i].end_index);
        where.push_back(i);
      }
    for (const auto& l : windowing::label_ends(ends, segs, false)) {
      stats.truth[where[l.window]] = l.label;
      stats.scored[where[l.window]] = !(options.exclude_first_window && l.ordinal == 1);
    }
  }
  if (!options.segments.empty())
    stats.score = score_commands(stats.commands, options.segments, options.exclude_first_window,
                                 options.tasks_per_run);
  return stats;
}

training::AccuracyReport score_commands(std::span<const CommandMsg> commands,
                                        std::span<const windowing::TaskSegment> segments,
                                        bool exclude_first, int tasks_per_run) {
  if (tasks_per_run < 1) throw ArgumentError("tasks_per_run must be positive");
  std::vector<const CommandMsg*> inside;
  std::vector<std::int64_t> ends;
  for (const auto& c : commands)
    if (windowing::inside_any(segments, c.end_index)) {
      inside.push_back(&c);
      ends.push_back(c.end_index);
    }
  const auto labels = windowing::label_ends(ends, segments, exclude_first);
  std::vector<MiClass> truth, predicted;
  std::map<int, std::pair<std::vector<MiClass>, std::vector<MiClass>>> per_run;
  for (const auto& l : labels) {
    truth.push_back(l.label);
    predicted.push_back(inside[l.window]->cmd);
    auto& run = per_run[static_cast<int>(l.segment) / tasks_per_run];
    run.first.push_back(l.label);
    run.second.push_back(inside[l.window]->cmd);
  }
  auto report = training::accuracy_from_confusion(training::confusion_from(truth, predicted));
  for (const auto& [run, tp] : per_run)
    report.run_timeline.emplace_back(
        run, training::accuracy_from_confusion(training::confusion_from(tp.first, tp.second)).accuracy);
  return report;
}

nlohmann::json LoopStats::to_json() const {
  auto summary = [](const std::vector<double>& v) {
    if (v.empty()) return nlohmann::json{{"count", 0}};
    double sum = 0, mx = v[0];
    for (double x : v) {
      sum += x;
      mx = std::max(mx, x);
    }
    return nlohmann::json{{"count", v.size()}, {"mean", sum / v.size()}, {"max", mx}};
  };
  nlohmann::json ticks = nlohmann::json::array();
  for (std::size_t i = 0; i < commands.size(); ++i) {
    const auto& c = commands[i];
    nlohmann::json t{{"seq", c.seq},
                     {"t_ms", c.t_ms},
                     {"end_index", c.end_index},
                     {"cmd", std::string(1, class_letter(c.cmd))},
                     {"probs", c.probs}};
    if (i < truth.size()) {
      t["truth"] = truth[i] ? nlohmann::json(std::string(1, class_letter(*truth[i]))) : nlohmann::json(nullptr);
      t["scored"] = static_cast<bool>(scored[i]);
    }
    ticks.push_back(std::move(t));
  }
  nlohmann::json j{{"format", "mipilot-stats/1"},
                   {"frames", frames},
                   {"commands", commands.size()},
                   {"dropped_ticks", dropped_ticks},
                   {"inference_ms", summary(inference_ms)},
                   {"end_to_end_ms", summary(end_to_end_ms)},
                   {"ticks", std::move(ticks)}};
  if (score) j["score"] = score->to_json();
  return j;
}

template class DecoderRuntime<float>;
template class DecoderRuntime<double>;
template LoopStats run_pipeline<float>(FrameSource&, DecoderRuntime<float>&, const CommandSink&,
                                       const PipelineOptions&);
template LoopStats run_pipeline<double>(FrameSource&, DecoderRuntime<double>&, const CommandSink&,
                                        const PipelineOptions&);

}  // namespace mipilot::realtime
