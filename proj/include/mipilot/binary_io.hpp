#pragma once

// Little-endian encoding helpers shared by the on-disk formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "mipilot/common.hpp"

namespace mipilot::io {

template <class T>
  requires std::is_arithmetic_v<T>
void put(std::vector<std::uint8_t>& out, T value) {
  std::uint8_t bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
  }
  out.insert(out.end(), bytes, bytes + sizeof(T));
}

inline void put_bytes(std::vector<std::uint8_t>& out, std::string_view s) {
  out.insert(out.end(), s.begin(), s.end());
}

// Sequential reader over a byte buffer. Every failure reports the byte offset.
class Reader {
 public:
  Reader(std::span<const std::uint8_t> bytes, std::string what)
      : bytes_(bytes), what_(std::move(what)) {}

  template <class T>
    requires std::is_arithmetic_v<T>
  T get() {
    need(sizeof(T), "value");
    T value;
    std::uint8_t tmp[sizeof(T)];
    std::memcpy(tmp, bytes_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) {
      for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(tmp[i], tmp[sizeof(T) - 1 - i]);
    }
    std::memcpy(&value, tmp, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  std::string get_string(std::size_t n) {
    need(n, "string");
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  void expect_magic(std::string_view magic) {
    auto got = get_string(magic.size());
    if (got != magic)
      fail("bad magic '" + got + "', expected '" + std::string(magic) + "'", pos_ - magic.size());
  }

  // Throws unless `n` more bytes are available.
  void need(std::size_t n, std::string_view field) const {
    if (bytes_.size() - pos_ < n) {
      fail("truncated " + std::string(field) + ": expected " + std::to_string(n) +
               " bytes, only " + std::to_string(bytes_.size() - pos_) + " available",
           pos_);
    }
  }

  [[noreturn]] void fail(const std::string& msg, std::size_t offset) const {
    throw FormatError(what_ + ": " + msg + " at byte offset " + std::to_string(offset));
  }

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::string what_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, std::span<const std::uint8_t> bytes);

}  // namespace mipilot::io
