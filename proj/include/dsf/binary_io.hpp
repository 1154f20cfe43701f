#pragma once

// Little-endian byte encoding shared by the scene and checkpoint formats.

#include <bit>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dsf/precision.hpp"

namespace dsf::inline DSF_PREC {

class ByteWriter {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void string(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  std::vector<char> take() && { return std::move(buf_); }

 private:
  std::vector<char> buf_;
};

/// Bounds-checked reader; `field` names the value in truncation errors.
class ByteReader {
 public:
  explicit ByteReader(const std::vector<char>& buf) : buf_(buf) {}

  void bytes(void* out, std::size_t n, const char* field);
  std::uint8_t u8(const char* field);
  std::uint32_t u32(const char* field);
  std::uint64_t u64(const char* field);
  float f32(const char* field) { return std::bit_cast<float>(u32(field)); }
  std::string string(const char* field);

  std::size_t remaining() const noexcept { return buf_.size() - pos_; }

 private:
  const std::vector<char>& buf_;
  std::size_t pos_ = 0;
};

std::vector<char> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::vector<char>& bytes);

}  // namespace dsf::inline DSF_PREC
