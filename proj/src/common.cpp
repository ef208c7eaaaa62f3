#include "mipilot/common.hpp"

#include <fstream>
#include <iterator>

#include "mipilot/binary_io.hpp"

namespace mipilot {

char class_letter(MiClass c) {
  static constexpr char kLetters[] = {'N', 'R', 'L', 'K'};
  return kLetters[class_index(c)];
}

std::optional<MiClass> class_from_letter(char c) {
  switch (c) {
    case 'N': return MiClass::N;
    case 'R': return MiClass::R;
    case 'L': return MiClass::L;
    case 'K': return MiClass::K;
    default: return std::nullopt;
  }
}

std::optional<MiClass> class_from_index(int i) {
  if (i < 0 || i >= kNumClasses) return std::nullopt;
  return static_cast<MiClass>(i);
}

namespace io {

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path + "' for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("short write to '" + path + "'");
}

}  // namespace io
}  // namespace mipilot
