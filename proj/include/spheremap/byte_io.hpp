#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace spheremap {

/// Raised by every binary decoder. `kind` lets callers tell failure modes apart.
class ParseError : public std::runtime_error {
 public:
  enum class Kind { bad_magic, bad_version, bad_header, truncated, trailing_bytes, bad_payload };

  ParseError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

static_assert(std::endian::native == std::endian::little,
              "binary formats are written with native little-endian stores");

class ByteWriter {
 public:
  void magic(std::string_view tag) { bytes_.insert(bytes_.end(), tag.begin(), tag.end()); }

  template <typename T>
  void put(T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    const auto* raw = reinterpret_cast<const std::uint8_t*>(&value);
    bytes_.insert(bytes_.end(), raw, raw + sizeof(T));
  }

  void u8(std::uint8_t v) { put(v); }
  void u16(std::uint16_t v) { put(v); }
  void u32(std::uint32_t v) { put(v); }
  void f32(float v) { put(v); }
  void f64(double v) { put(v); }

  std::size_t size() const noexcept { return bytes_.size(); }
  std::vector<std::uint8_t> take() && { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  void expect_magic(std::string_view tag) {
    if (bytes_.size() < tag.size() ||
        std::memcmp(bytes_.data(), tag.data(), tag.size()) != 0) {
      throw ParseError(ParseError::Kind::bad_magic,
                       "bad magic, expected \"" + std::string(tag) + "\"");
    }
    pos_ = tag.size();
  }

  template <typename T>
  T get() {
    if (remaining() < sizeof(T)) {
      throw ParseError(ParseError::Kind::truncated,
                       "truncated input at byte " + std::to_string(pos_));
    }
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  std::uint8_t u8() { return get<std::uint8_t>(); }
  std::uint16_t u16() { return get<std::uint16_t>(); }
  std::uint32_t u32() { return get<std::uint32_t>(); }
  float f32() { return get<float>(); }
  double f64() { return get<double>(); }

  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }
  std::size_t position() const noexcept { return pos_; }

  void expect_end() const {
    if (remaining() != 0) {
      throw ParseError(ParseError::Kind::trailing_bytes,
                       std::to_string(remaining()) + " trailing bytes");
    }
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace spheremap
