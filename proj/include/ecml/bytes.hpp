#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

#include "ecml/error.hpp"

namespace ecml::bytes {

// Little-endian encoder, independent of host byte order.
class Writer {
 public:
  void raw(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }

  const std::vector<char>& data() const { return buf_; }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
  }
  std::vector<char> buf_;
};

class Reader {
 public:
  Reader(const std::vector<char>& buf, std::string what) : buf_(buf), what_(std::move(what)) {}

  std::string raw(std::size_t n) {
    need(n);
    std::string s(buf_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  double f64() { return std::bit_cast<double>(get(8)); }

  std::size_t position() const { return pos_; }
  std::size_t size() const { return buf_.size(); }
  bool at_end() const { return pos_ == buf_.size(); }

  // Throws unless `n` more bytes are available; reports the byte count the
  // layout requires against the actual length.
  void need(std::uint64_t n) const {
    if (n > buf_.size() - pos_) {
      throw FormatError("truncated " + what_ + ": expected at least " +
                        std::to_string(pos_ + n) + " bytes, file has " +
                        std::to_string(buf_.size()));
    }
  }

 private:
  std::uint64_t get(int n) {
    need(static_cast<std::uint64_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    }
    pos_ += static_cast<std::size_t>(n);
    return v;
  }

  const std::vector<char>& buf_;
  std::string what_;
  std::size_t pos_ = 0;
};

inline std::vector<char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open file: " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::string& path, const std::vector<char>& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write file: " + path);
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw ValidationError("write failed: " + path);
}

}  // namespace ecml::bytes
