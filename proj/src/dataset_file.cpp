#include <cmath>

#include "mipilot/binary_io.hpp"
#include "mipilot/windowing.hpp"

namespace mipilot::windowing {

namespace {
constexpr std::string_view kMagic = "MIDS";
constexpr std::uint16_t kVersion = 1;
}  // namespace

std::vector<std::uint8_t> encode_dataset(std::span<const LabeledWindow> windows) {
  const int channels = windows.empty() ? kChannels : windows.front().window.channels;
  const int length = windows.empty() ? 0 : windows.front().window.length;
  std::vector<std::uint8_t> out;
  io::put_bytes(out, kMagic);
  io::put<std::uint16_t>(out, kVersion);
  io::put<std::uint16_t>(out, static_cast<std::uint16_t>(channels));
  io::put<std::uint32_t>(out, static_cast<std::uint32_t>(length));
  io::put<std::uint64_t>(out, windows.size());
  for (const auto& lw : windows) {
    if (lw.window.channels != channels || lw.window.length != length)
      throw ShapeError("dataset windows must share one shape");
    if (lw.ordinal < 0 || lw.ordinal > 255) throw ArgumentError("window ordinal exceeds one byte");
    io::put<std::uint8_t>(out, static_cast<std::uint8_t>(lw.label));
    io::put<std::uint8_t>(out, static_cast<std::uint8_t>(lw.ordinal));
    for (float v : lw.window.data) io::put<float>(out, v);
  }
  return out;
}

std::vector<LabeledWindow> decode_dataset(std::span<const std::uint8_t> bytes) {
  io::Reader in(bytes, "dataset");
  in.expect_magic(kMagic);
  const auto version = in.get<std::uint16_t>();
  if (version != kVersion)
    in.fail("unsupported version " + std::to_string(version), in.offset() - 2);
  const int channels = in.get<std::uint16_t>();
  const auto length = in.get<std::uint32_t>();
  const auto count = in.get<std::uint64_t>();
  const std::size_t record = 2 + static_cast<std::size_t>(channels) * length * sizeof(float);
  if (count > 0 && in.remaining() / record < count) {
    in.fail("payload holds " + std::to_string(in.remaining()) + " bytes, expected " +
                std::to_string(count * record) + " for " + std::to_string(count) + " records",
            in.offset());
  }
  std::vector<LabeledWindow> out;
  out.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    LabeledWindow lw;
    const auto label_at = in.offset();
    const auto label = class_from_index(in.get<std::uint8_t>());
    if (!label) in.fail("invalid class label", label_at);
    lw.label = *label;
    lw.ordinal = in.get<std::uint8_t>();
    lw.window.channels = channels;
    lw.window.length = static_cast<int>(length);
    lw.window.data.resize(static_cast<std::size_t>(channels) * length);
    for (auto& v : lw.window.data) v = in.get<float>();
    out.push_back(std::move(lw));
  }
  if (in.remaining() != 0) in.fail("trailing bytes after last record", in.offset());
  return out;
}

void write_dataset(const std::string& path, std::span<const LabeledWindow> windows) {
  io::write_file(path, encode_dataset(windows));
}

std::vector<LabeledWindow> read_dataset(const std::string& path) {
  return decode_dataset(io::read_file(path));
}

}  // namespace mipilot::windowing
