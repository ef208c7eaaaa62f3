#include "mipilot/recording.hpp"

#include "mipilot/binary_io.hpp"

namespace mipilot::session {

namespace {
constexpr std::string_view kMagic = "EEGR";
constexpr std::uint16_t kVersion = 1;
}  // namespace

windowing::SampleFrame Recording::frame(std::int64_t index) const {
  if (channels != kChannels) throw ShapeError("frames carry exactly 16 channels");
  windowing::SampleFrame f;
  f.index = index;
  const auto base = static_cast<std::size_t>(index) * kChannels;
  std::copy_n(samples.begin() + static_cast<std::ptrdiff_t>(base), kChannels, f.channels.begin());
  return f;
}

std::vector<windowing::TaskSegment> Recording::segments(std::int64_t task_samples) const {
  std::vector<windowing::TaskSegment> out;
  out.reserve(cues.size());
  for (const auto& c : cues) out.push_back({c.label, c.t_start_sample, task_samples});
  return out;
}

std::vector<std::uint8_t> encode_recording(const Recording& rec) {
  if (rec.channels <= 0 || rec.samples.size() % static_cast<std::size_t>(rec.channels) != 0)
    throw ShapeError("recording payload is not a whole number of frames");
  std::vector<std::uint8_t> out;
  out.reserve(24 + rec.samples.size() * 4 + rec.cues.size() * 9);
  io::put_bytes(out, kMagic);
  io::put<std::uint16_t>(out, kVersion);
  io::put<std::uint16_t>(out, static_cast<std::uint16_t>(rec.channels));
  io::put<std::uint32_t>(out, static_cast<std::uint32_t>(rec.rate_hz));
  io::put<std::uint64_t>(out, static_cast<std::uint64_t>(rec.sample_count()));
  for (float v : rec.samples) io::put<float>(out, v);
  io::put<std::uint32_t>(out, static_cast<std::uint32_t>(rec.cues.size()));
  for (const auto& c : rec.cues) {
    io::put<std::uint64_t>(out, static_cast<std::uint64_t>(c.t_start_sample));
    io::put<std::uint8_t>(out, static_cast<std::uint8_t>(c.label));
  }
  return out;
}

Recording decode_recording(std::span<const std::uint8_t> bytes) {
  io::Reader in(bytes, "recording");
  in.expect_magic(kMagic);
  const auto version = in.get<std::uint16_t>();
  if (version != kVersion)
    in.fail("unsupported version " + std::to_string(version), in.offset() - 2);
  Recording rec;
  rec.channels = in.get<std::uint16_t>();
  rec.rate_hz = static_cast<int>(in.get<std::uint32_t>());
  const auto count = in.get<std::uint64_t>();
  const std::size_t payload = static_cast<std::size_t>(count) * rec.channels * sizeof(float);
  in.need(payload, "sample payload");
  rec.samples.resize(static_cast<std::size_t>(count) * rec.channels);
  for (auto& v : rec.samples) v = in.get<float>();
  const auto ncues = in.get<std::uint32_t>();
  in.need(static_cast<std::size_t>(ncues) * 9, "cue track");
  for (std::uint32_t i = 0; i < ncues; ++i) {
    const auto at = in.offset();
    CueEvent c;
    c.t_start_sample = static_cast<std::int64_t>(in.get<std::uint64_t>());
    const auto label = class_from_index(in.get<std::uint8_t>());
    if (!label) in.fail("invalid cue label", at + 8);
    if (c.t_start_sample < 0 || static_cast<std::uint64_t>(c.t_start_sample) >= count)
      in.fail("cue start " + std::to_string(c.t_start_sample) + " beyond " +
                  std::to_string(count) + " samples",
              at);
    c.label = *label;
    rec.cues.push_back(c);
  }
  if (in.remaining() != 0) in.fail("trailing bytes after cue track", in.offset());
  return rec;
}

void write_recording(const std::string& path, const Recording& rec) {
  io::write_file(path, encode_recording(rec));
}

Recording read_recording(const std::string& path) { return decode_recording(io::read_file(path)); }

}  // namespace mipilot::session
