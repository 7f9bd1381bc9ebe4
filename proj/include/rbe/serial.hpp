#pragma once

#include <array>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "rbe/tensor.hpp"

// Little-endian binary encoding plus CRC32 framing shared by the RBEW /
// RBED / RBET file formats. Every file is: 4-byte magic, payload, then a
// trailing CRC32 over all preceding bytes (magic included).

namespace rbe {

inline uint32_t crc32(const unsigned char* data, size_t n, uint32_t seed = 0) {
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
  for (size_t i = 0; i < n; ++i) c = table[(c ^ data[i]) & 0xFFu] ^ (c >> 8);
  return c ^ 0xFFFFFFFFu;
}

class ByteWriter {
 public:
  void magic(const char m[4]) { buf_.insert(buf_.end(), m, m + 4); }

  void u32(uint32_t x) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<unsigned char>((x >> (8 * i)) & 0xFF));
  }

  void f64(double x) {
    uint64_t bits;
    std::memcpy(&bits, &x, 8);
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<unsigned char>((bits >> (8 * i)) & 0xFF));
  }

  void f64_span(const std::vector<double>& xs) {
    for (double x : xs) f64(x);
  }

  // Appends the CRC of everything written so far and returns the buffer.
  std::vector<unsigned char> finish() {
    uint32_t c = crc32(buf_.data(), buf_.size());
    u32(c);
    return std::move(buf_);
  }

 private:
  std::vector<unsigned char> buf_;
};

class ByteReader {
 public:
  ByteReader(std::vector<unsigned char> buf, std::string source)
      : buf_(std::move(buf)), src_(std::move(source)) {}

  void expect_magic(const char m[4]) {
    if (buf_.size() < 4 || std::memcmp(buf_.data(), m, 4) != 0)
      throw IoError(src_ + ": bad magic (expected \"" + std::string(m, 4) + "\")");
    pos_ = 4;
  }

  uint32_t u32(const std::string& field) {
    need(4, field);
    uint32_t x = 0;
    for (int i = 0; i < 4; ++i) x |= static_cast<uint32_t>(buf_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return x;
  }

  double f64(const std::string& field) {
    need(8, field);
    uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<uint64_t>(buf_[pos_ + i]) << (8 * i);
    pos_ += 8;
    double x;
    std::memcpy(&x, &bits, 8);
    return x;
  }

  std::vector<double> f64_span(size_t n, const std::string& field) {
    std::vector<double> xs(n);
    for (size_t i = 0; i < n; ++i) xs[i] = f64(field);
    return xs;
  }

  // Verifies the trailing CRC against everything before it. Call after the
  // magic so pos_ is meaningful; reading past it afterwards still works.
  void check_crc() {
    if (buf_.size() < 8) throw IoError(src_ + ": truncated (no room for CRC)");
    size_t body = buf_.size() - 4;
    uint32_t stored = 0;
    for (int i = 0; i < 4; ++i) stored |= static_cast<uint32_t>(buf_[body + i]) << (8 * i);
    uint32_t actual = crc32(buf_.data(), body);
    if (stored != actual)
      throw IoError(src_ + ": CRC32 mismatch (file corrupt)");
  }

  // True when only the 4 CRC bytes remain.
  bool at_payload_end() const { return pos_ + 4 == buf_.size(); }

  void expect_payload_end() {
    if (!at_payload_end())
      throw IoError(src_ + ": trailing bytes after payload (expected " + std::to_string(pos_ + 4) +
                    " bytes total, file has " + std::to_string(buf_.size()) + ")");
  }

 private:
  void need(size_t n, const std::string& field) {
    // The last 4 bytes are the CRC; payload fields must not run into them.
    if (pos_ + n + 4 > buf_.size())
      throw IoError(src_ + ": truncated while reading " + field + " (expected " +
                    std::to_string(pos_ + n + 4) + "+ bytes, file has " +
                    std::to_string(buf_.size()) + ")");
  }

  std::vector<unsigned char> buf_;
  std::string src_;
  size_t pos_ = 0;
};

inline std::vector<unsigned char> read_file_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError(path + ": cannot open for reading");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());
  return bytes;
}

// Writes via a temporary sibling then renames, so a killed run never leaves
// a partial file under the final name.
inline void atomic_write_file(const std::string& path, const void* data, size_t n) {
  namespace fs = std::filesystem;
  fs::path final_path(path);
  if (final_path.has_parent_path()) fs::create_directories(final_path.parent_path());
  fs::path tmp = final_path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError(tmp.string() + ": cannot open for writing");
    f.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    if (!f) throw IoError(tmp.string() + ": write failed");
  }
  fs::rename(tmp, final_path);
}

inline void atomic_write_file(const std::string& path, const std::vector<unsigned char>& bytes) {
  atomic_write_file(path, bytes.data(), bytes.size());
}

inline void atomic_write_text(const std::string& path, const std::string& text) {
  atomic_write_file(path, text.data(), text.size());
}

}  // namespace rbe
