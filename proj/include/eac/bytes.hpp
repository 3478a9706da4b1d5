#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "eac/errors.hpp"

namespace eac {

// Little-endian primitive serialization shared by the container and weight
// file formats.

class ByteWriter {
 public:
  void u8(uint8_t v) { bytes_.push_back(v); }
  void u16(uint16_t v) {
    bytes_.push_back(static_cast<uint8_t>(v));
    bytes_.push_back(static_cast<uint8_t>(v >> 8));
  }
  void u32(uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<uint32_t>(v)); }
  void raw(const uint8_t* data, std::size_t n) { bytes_.insert(bytes_.end(), data, data + n); }
  void raw(const std::vector<uint8_t>& data) { raw(data.data(), data.size()); }
  void tag(const char* four) { raw(reinterpret_cast<const uint8_t*>(four), 4); }

  const std::vector<uint8_t>& bytes() const { return bytes_; }
  std::vector<uint8_t> take() { return std::move(bytes_); }
  std::size_t size() const { return bytes_.size(); }

 private:
  std::vector<uint8_t> bytes_;
};

class ByteReader {
 public:
  ByteReader(const uint8_t* data, std::size_t size) : data_(data), size_(size) {}
  explicit ByteReader(const std::vector<uint8_t>& bytes)
      : data_(bytes.data()), size_(bytes.size()) {}

  uint8_t u8() { return data_[need(1)]; }
  uint16_t u16() {
    const std::size_t p = need(2);
    return static_cast<uint16_t>(data_[p] | (data_[p + 1] << 8));
  }
  uint32_t u32() {
    const std::size_t p = need(4);
    uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | data_[p + static_cast<std::size_t>(i)];
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::vector<uint8_t> raw(std::size_t n) {
    const std::size_t p = need(n);
    return std::vector<uint8_t>(data_ + p, data_ + p + n);
  }
  void expect_tag(const char* four, const std::string& what) {
    const std::size_t p = need(4);
    if (std::memcmp(data_ + p, four, 4) != 0) {
      throw FormatError(what + ": bad magic");
    }
  }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return size_ - pos_; }

 private:
  std::size_t need(std::size_t n) {
    if (size_ - pos_ < n) throw FormatError("byte stream: truncated");
    const std::size_t p = pos_;
    pos_ += n;
    return p;
  }

  const uint8_t* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

// CRC-32 (reflected, polynomial 0xEDB88320, init/final 0xFFFFFFFF).
inline uint32_t crc32(const uint8_t* data, std::size_t n, uint32_t seed = 0) {
  static const auto table = [] {
    std::array<uint32_t, 256> t{};
    for (uint32_t i = 0; i < 256; ++i) {
      uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  uint32_t c = seed ^ 0xFFFFFFFFu;
  for (std::size_t i = 0; i < n; ++i) {
    c = table[(c ^ data[i]) & 0xFFu] ^ (c >> 8);
  }
  return c ^ 0xFFFFFFFFu;
}

inline uint32_t crc32(const std::vector<uint8_t>& bytes) {
  return crc32(bytes.data(), bytes.size());
}

}  // namespace eac
