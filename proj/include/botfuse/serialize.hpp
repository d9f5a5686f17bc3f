#pragma once

// Little-endian binary encoding helpers shared by the model and ensemble
// file formats. Every payload ends with an FNV-1a 64 checksum of the bytes
// that precede it.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

#include "botfuse/error.hpp"

namespace botfuse {

using Bytes = std::vector<std::uint8_t>;

inline std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

class ByteWriter {
 public:
  void raw(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }

  /// Appends the checksum and hands over the buffer.
  Bytes finish() {
    u64(fnv1a64(buf_.data(), buf_.size()));
    return std::move(buf_);
  }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  Bytes buf_;
};

class ByteReader {
 public:
  /// Verifies the trailing checksum up front; throws CorruptPayload otherwise.
  explicit ByteReader(const Bytes& bytes) : data_(bytes.data()), size_(bytes.size()) {
    if (size_ < 8) throw Error(ErrorCode::CorruptPayload, "payload too short");
    size_ -= 8;
    std::uint64_t stored = 0;
    for (int i = 0; i < 8; ++i) stored |= static_cast<std::uint64_t>(data_[size_ + i]) << (8 * i);
    if (stored != fnv1a64(data_, size_)) throw Error(ErrorCode::CorruptPayload, "checksum mismatch");
  }

  bool expect(std::string_view magic) {
    need(magic.size());
    const bool ok = std::memcmp(data_ + pos_, magic.data(), magic.size()) == 0;
    pos_ += magic.size();
    return ok;
  }
  std::uint8_t u8() {
    need(1);
    return data_[pos_++];
  }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  double f64() { return std::bit_cast<double>(get(8)); }

  std::size_t remaining() const { return size_ - pos_; }
  bool at_end() const { return pos_ == size_; }

 private:
  void need(std::size_t n) const {
    if (size_ - pos_ < n) throw Error(ErrorCode::CorruptPayload, "unexpected end of payload");
  }
  std::uint64_t get(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }

  const std::uint8_t* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

inline void write_bytes(const std::filesystem::path& path, const Bytes& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

inline Bytes read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::FileNotFound, path.string());
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace botfuse
