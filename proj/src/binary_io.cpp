#include "dsf/binary_io.hpp"

#include <cstring>
#include <fstream>
#include <iterator>

#include "dsf/scene_io.hpp"

namespace dsf::inline DSF_PREC {

void ByteReader::bytes(void* out, std::size_t n, const char* field) {
  if (remaining() < n) throw ParseError(std::string("truncated input while reading ") + field);
  std::memcpy(out, buf_.data() + pos_, n);
  pos_ += n;
}

std::uint8_t ByteReader::u8(const char* field) {
  std::uint8_t v;
  bytes(&v, 1, field);
  return v;
}

std::uint32_t ByteReader::u32(const char* field) {
  unsigned char b[4];
  bytes(b, 4, field);
  return static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
         static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
}

std::uint64_t ByteReader::u64(const char* field) {
  const std::uint64_t lo = u32(field);
  const std::uint64_t hi = u32(field);
  return lo | hi << 32;
}

std::string ByteReader::string(const char* field) {
  const std::uint32_t n = u32(field);
  if (remaining() < n) throw ParseError(std::string("truncated input while reading ") + field);
  std::string s(buf_.data() + pos_, n);
  pos_ += n;
  return s;
}

std::vector<char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::vector<char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

}  // namespace dsf::inline DSF_PREC
