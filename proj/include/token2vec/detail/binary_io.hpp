#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>
#include <vector>

#include "token2vec/errors.hpp"

namespace token2vec::detail {

// Little-endian byte buffer builder for the TV2* container formats.
class ByteWriter {
 public:
  void bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s);
  }
  const std::vector<char>& buffer() const { return buf_; }
  std::size_t size() const { return buf_.size(); }

 private:
  std::vector<char> buf_;
};

// Bounds-checked reader; every failure names the byte offset it hit.
class ByteReader {
 public:
  ByteReader(const std::vector<char>& buf, std::string what) : buf_(buf), what_(std::move(what)) {}

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return buf_.size() - pos_; }

  void expect_magic(std::string_view magic) {
    need(magic.size(), "magic");
    if (std::memcmp(buf_.data() + pos_, magic.data(), magic.size()) != 0) {
      fail("bad magic, expected \"" + std::string(magic) + "\"");
    }
    pos_ += magic.size();
  }
  std::uint16_t u16(const char* field) {
    need(2, field);
    const auto v = static_cast<std::uint16_t>(static_cast<unsigned char>(buf_[pos_]) |
                                              (static_cast<unsigned char>(buf_[pos_ + 1]) << 8));
    pos_ += 2;
    return v;
  }
  std::uint32_t u32(const char* field) {
    need(4, field);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64(const char* field) {
    need(8, field);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }
  float f32(const char* field) { return std::bit_cast<float>(u32(field)); }
  double f64(const char* field) { return std::bit_cast<double>(u64(field)); }
  std::string str(const char* field) {
    const std::uint32_t n = u32(field);
    need(n, field);
    std::string s(buf_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  void seek(std::size_t offset) {
    if (offset > buf_.size()) fail("seek past end to " + std::to_string(offset));
    pos_ = offset;
  }
  [[noreturn]] void fail(const std::string& msg) const {
    throw FormatError(what_ + ": " + msg + " at byte offset " + std::to_string(pos_));
  }
  void need(std::size_t n, const char* field) const {
    if (remaining() < n) {
      fail(std::string("truncated while reading ") + field + " (need " + std::to_string(n) + " bytes, have " +
           std::to_string(remaining()) + ")");
    }
  }

 private:
  const std::vector<char>& buf_;
  std::string what_;
  std::size_t pos_ = 0;
};

std::vector<char> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, const std::vector<char>& bytes);
std::string read_file_text(const std::string& path);
void write_file_text(const std::string& path, const std::string& text);

}  // namespace token2vec::detail
