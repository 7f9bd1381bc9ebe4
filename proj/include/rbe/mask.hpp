#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rbe/serial.hpp"
#include "rbe/tensor.hpp"

// Binary edit-region masks [H,W], broadcast over channels, plus the
// in/out-region pixel-change metrics.

namespace rbe {

struct Mask {
  int h = 0;
  int w = 0;
  std::vector<uint8_t> bits;  // values in {0,1}, row-major

  Mask() = default;
  Mask(int height, int width, uint8_t fill = 0)
      : h(height), w(width), bits(static_cast<size_t>(height) * width, fill) {
    require(height > 0 && width > 0, "Mask: dimensions must be positive");
  }

  uint8_t at(int y, int x) const { return bits[static_cast<size_t>(y) * w + x]; }
  uint8_t& at(int y, int x) { return bits[static_cast<size_t>(y) * w + x]; }

  size_t ones() const {
    size_t n = 0;
    for (uint8_t b : bits) n += b;
    return n;
  }
  double coverage() const { return static_cast<double>(ones()) / static_cast<double>(bits.size()); }
};

inline Mask rect_mask(int H, int W, int top, int left, int height, int width) {
  require(H > 0 && W > 0, "rect_mask: frame must be positive");
  require(height >= 1 && width >= 1, "rect_mask: rectangle must have area >= 1");
  require(top >= 0 && left >= 0 && top + height <= H && left + width <= W,
          "rect_mask: rectangle out of bounds");
  Mask m(H, W);
  for (int y = top; y < top + height; ++y)
    for (int x = left; x < left + width; ++x) m.at(y, x) = 1;
  return m;
}

inline Mask complement(const Mask& m) {
  Mask r = m;
  for (auto& b : r.bits) b = b ? 0 : 1;
  return r;
}

inline Image apply_mask(const Image& img, const Mask& m) {
  require(img.shape.h == m.h && img.shape.w == m.w, "apply_mask: H,W mismatch");
  Image r = img;
  for (int c = 0; c < r.shape.c; ++c)
    for (int y = 0; y < r.shape.h; ++y)
      for (int x = 0; x < r.shape.w; ++x) r.at(c, y, x) *= m.at(y, x);
  return r;
}

/// Mean squared differences over all pixels, the mask=1 region, and the
/// mask=0 region. An empty region reports nullopt rather than 0.
struct RegionMse {
  double global = 0.0;
  std::optional<double> in;
  std::optional<double> out;
};

inline RegionMse region_mse(const Image& a, const Image& b, const Mask& m) {
  require(a.shape == b.shape, "region_mse: image shapes differ");
  require(a.shape.h == m.h && a.shape.w == m.w, "region_mse: mask H,W mismatch");
  long double ss_in = 0.0L, ss_out = 0.0L, ss_all = 0.0L;
  size_t n_in = 0, n_out = 0;
  for (int c = 0; c < a.shape.c; ++c)
    for (int y = 0; y < a.shape.h; ++y)
      for (int x = 0; x < a.shape.w; ++x) {
        long double d = a.at(c, y, x) - b.at(c, y, x);
        long double d2 = d * d;
        ss_all += d2;
        if (m.at(y, x)) {
          ss_in += d2;
          ++n_in;
        } else {
          ss_out += d2;
          ++n_out;
        }
      }
  RegionMse r;
  r.global = static_cast<double>(ss_all / static_cast<long double>(a.v.size()));
  if (n_in > 0) r.in = static_cast<double>(ss_in / static_cast<long double>(n_in));
  if (n_out > 0) r.out = static_cast<double>(ss_out / static_cast<long double>(n_out));
  return r;
}

// --- PGM (P5, maxval 255) mask raster ---------------------------------
// Pixels >= 128 map to 1. Only maxval 255 is accepted.

namespace detail {

inline int pgm_token(const std::vector<unsigned char>& buf, size_t& pos, const std::string& path) {
  // skip whitespace and '#' comments
  while (pos < buf.size()) {
    unsigned char c = buf[pos];
    if (c == '#') {
      while (pos < buf.size() && buf[pos] != '\n') ++pos;
    } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
      ++pos;
    } else {
      break;
    }
  }
  if (pos >= buf.size() || buf[pos] < '0' || buf[pos] > '9')
    throw IoError(path + ": malformed header at byte offset " + std::to_string(pos));
  long val = 0;
  while (pos < buf.size() && buf[pos] >= '0' && buf[pos] <= '9') {
    val = val * 10 + (buf[pos] - '0');
    if (val > 1000000) throw IoError(path + ": header value too large at byte offset " + std::to_string(pos));
    ++pos;
  }
  return static_cast<int>(val);
}

}  // namespace detail

inline Mask load_mask_pgm(const std::string& path) {
  auto buf = read_file_bytes(path);
  if (buf.size() < 2 || buf[0] != 'P' || buf[1] != '5')
    throw IoError(path + ": not a binary PGM (expected magic P5 at byte offset 0)");
  size_t pos = 2;
  int w = detail::pgm_token(buf, pos, path);
  int h = detail::pgm_token(buf, pos, path);
  int maxval = detail::pgm_token(buf, pos, path);
  if (maxval != 255) throw IoError(path + ": maxval must be 255, got " + std::to_string(maxval));
  if (pos >= buf.size() || (buf[pos] != '\n' && buf[pos] != ' ' && buf[pos] != '\t' && buf[pos] != '\r'))
    throw IoError(path + ": missing whitespace after maxval at byte offset " + std::to_string(pos));
  ++pos;
  size_t need = static_cast<size_t>(w) * static_cast<size_t>(h);
  if (buf.size() - pos < need)
    throw IoError(path + ": truncated pixel data (expected " + std::to_string(need) + " bytes from offset " +
                  std::to_string(pos) + ", have " + std::to_string(buf.size() - pos) + ")");
  Mask m(h, w);
  for (size_t i = 0; i < need; ++i) m.bits[i] = buf[pos + i] >= 128 ? 1 : 0;
  return m;
}

inline void save_mask_pgm(const Mask& m, const std::string& path) {
  std::string header = "P5\n" + std::to_string(m.w) + " " + std::to_string(m.h) + "\n255\n";
  std::vector<unsigned char> out(header.begin(), header.end());
  for (uint8_t b : m.bits) out.push_back(b ? 255 : 0);
  atomic_write_file(path, out);
}

}  // namespace rbe
