#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace reguide::io {

// Loud, typed failures for every container read path.
class IoError : public std::runtime_error {
 public:
  enum class Code { kBadMagic, kBadVersion, kTruncated, kBadChecksum, kWrongComponent, kOther };
  IoError(Code code, const std::string& msg) : std::runtime_error(msg), code_(code) {}
  Code code() const { return code_; }

 private:
  Code code_;
};

// CRC-32 (IEEE 802.3, reflected 0xEDB88320), the trailing checksum of every
// binary container in this project.
inline uint32_t crc32(const uint8_t* data, size_t len, uint32_t seed = 0) {
  static const auto table = [] {
    std::array<uint32_t, 256> t{};
    for (uint32_t i = 0; i < 256; ++i) {
      uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  uint32_t c = ~seed;
  for (size_t i = 0; i < len; ++i) c = table[(c ^ data[i]) & 0xFFu] ^ (c >> 8);
  return ~c;
}

inline uint32_t crc32(const std::vector<uint8_t>& data) {
  return crc32(data.data(), data.size());
}

// FNV-1a 64-bit, used as the cheap content hash that ties indexes and
// manifests to the exact checkpoint bytes they were built from.
inline uint64_t fnv1a64(const uint8_t* data, size_t len) {
  uint64_t h = 1469598103934665603ull;
  for (size_t i = 0; i < len; ++i) {
    h ^= data[i];
    h *= 1099511628211ull;
  }
  return h;
}

inline uint64_t fnv1a64(const std::vector<uint8_t>& data) {
  return fnv1a64(data.data(), data.size());
}

inline std::string hex64(uint64_t h) {
  static const char* d = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<size_t>(i)] = d[h & 0xF];
    h >>= 4;
  }
  return s;
}

// Little-endian append-only byte buffer; the single write path for all
// container formats.
class BinWriter {
 public:
  void u8(uint8_t v) { buf_.push_back(v); }
  void u32(uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }
  void u64(uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }
  void i64(int64_t v) { u64(static_cast<uint64_t>(v)); }
  void f64(double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, 8);
    u64(bits);
  }
  void magic(const char m[5]) { buf_.insert(buf_.end(), m, m + 4); }
  void str(const std::string& s) {
    u32(static_cast<uint32_t>(s.size()));
    buf_.insert(buf_.end(), s.begin(), s.end());
  }
  void f64s(const std::vector<double>& v) {
    u64(v.size());
    for (double x : v) f64(x);
  }

  // Appends the CRC of everything written so far and returns the full buffer.
  std::vector<uint8_t> finish() {
    uint32_t c = crc32(buf_);
    u32(c);
    return std::move(buf_);
  }

  const std::vector<uint8_t>& bytes() const { return buf_; }

 private:
  std::vector<uint8_t> buf_;
};

// Little-endian cursor over a checksummed container. Construction verifies
// the trailing CRC; every read checks bounds.
class BinReader {
 public:
  BinReader(std::vector<uint8_t> bytes, const std::string& what)
      : buf_(std::move(bytes)), what_(what) {
    if (buf_.size() < 8)
      throw IoError(IoError::Code::kTruncated, what_ + ": file truncated (" +
                                                   std::to_string(buf_.size()) + " bytes)");
    uint32_t stored = 0;
    for (int i = 0; i < 4; ++i)
      stored |= static_cast<uint32_t>(buf_[buf_.size() - 4 + static_cast<size_t>(i)]) << (8 * i);
    uint32_t actual = crc32(buf_.data(), buf_.size() - 4);
    if (stored != actual)
      throw IoError(IoError::Code::kBadChecksum, what_ + ": checksum mismatch");
    end_ = buf_.size() - 4;
  }

  void expect_magic(const char m[5]) {
    need(4);
    if (std::memcmp(buf_.data() + pos_, m, 4) != 0)
      throw IoError(IoError::Code::kBadMagic, what_ + ": bad magic (want " + std::string(m, 4) + ")");
    pos_ += 4;
  }
  uint8_t u8() {
    need(1);
    return buf_[pos_++];
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(buf_[pos_++]) << (8 * i);
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(buf_[pos_++]) << (8 * i);
    return v;
  }
  int64_t i64() { return static_cast<int64_t>(u64()); }
  double f64() {
    uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  std::string str() {
    uint32_t n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(buf_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::vector<double> f64s() {
    uint64_t n = u64();
    std::vector<double> v(n);
    for (auto& x : v) x = f64();
    return v;
  }

  void expect_done() const {
    if (pos_ != end_)
      throw IoError(IoError::Code::kOther, what_ + ": trailing bytes after payload");
  }

 private:
  void need(size_t n) {
    if (pos_ + n > end_)
      throw IoError(IoError::Code::kTruncated, what_ + ": file truncated mid-record");
  }

  std::vector<uint8_t> buf_;
  std::string what_;
  size_t pos_ = 0;
  size_t end_ = 0;
};

inline void write_file(const std::string& path, const std::vector<uint8_t>& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError(IoError::Code::kOther, "cannot open for write: " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError(IoError::Code::kOther, "write failed: " + path);
}

inline std::vector<uint8_t> read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  if (!f) throw IoError(IoError::Code::kOther, "cannot open: " + path);
  auto size = f.tellg();
  f.seekg(0);
  std::vector<uint8_t> bytes(static_cast<size_t>(size));
  f.read(reinterpret_cast<char*>(bytes.data()), size);
  if (!f) throw IoError(IoError::Code::kOther, "read failed: " + path);
  return bytes;
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError(IoError::Code::kOther, "cannot open for write: " + path);
  f << text;
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError(IoError::Code::kOther, "cannot open: " + path);
  return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

}  // namespace reguide::io
