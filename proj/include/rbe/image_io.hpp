#pragma once

#include <string>

#include "rbe/mask.hpp"
#include "rbe/serial.hpp"
#include "rbe/tensor.hpp"

// PPM (P6, 8-bit) image export/import. Model pixels live in [-1,1] and map
// linearly to [0,255] with clamping; single-channel images are replicated
// to gray RGB. Comment lines after the magic carry caller metadata.

namespace rbe {

namespace detail {

inline unsigned char to_byte(double v) {
  double u = (v + 1.0) * 0.5 * 255.0;
  if (u < 0.0) u = 0.0;
  if (u > 255.0) u = 255.0;
  return static_cast<unsigned char>(u + 0.5);
}

inline double from_byte(unsigned char b) { return static_cast<double>(b) / 255.0 * 2.0 - 1.0; }

}  // namespace detail

inline void save_image_ppm(const Image& img, const std::string& path,
                           const std::string& comment = "") {
  require(img.shape.c == 1 || img.shape.c == 3, "save_image_ppm: needs 1 or 3 channels");
  std::string header = "P6\n";
  if (!comment.empty()) {
    // one '#' per line
    std::string line = "# ";
    for (char ch : comment) {
      if (ch == '\n') {
        header += line + "\n";
        line = "# ";
      } else {
        line += ch;
      }
    }
    if (line != "# ") header += line + "\n";
  }
  header += std::to_string(img.shape.w) + " " + std::to_string(img.shape.h) + "\n255\n";
  std::vector<unsigned char> out(header.begin(), header.end());
  for (int y = 0; y < img.shape.h; ++y)
    for (int x = 0; x < img.shape.w; ++x)
      for (int c = 0; c < 3; ++c) {
        int src = img.shape.c == 3 ? c : 0;
        out.push_back(detail::to_byte(img.at(src, y, x)));
      }
  atomic_write_file(path, out);
}

inline Image load_image_ppm(const std::string& path, int channels = 3) {
  require(channels == 1 || channels == 3, "load_image_ppm: channels must be 1 or 3");
  auto buf = read_file_bytes(path);
  if (buf.size() < 2 || buf[0] != 'P' || buf[1] != '6')
    throw IoError(path + ": not a binary PPM (expected magic P6 at byte offset 0)");
  size_t pos = 2;
  int w = detail::pgm_token(buf, pos, path);
  int h = detail::pgm_token(buf, pos, path);
  int maxval = detail::pgm_token(buf, pos, path);
  if (maxval != 255) throw IoError(path + ": maxval must be 255, got " + std::to_string(maxval));
  ++pos;
  size_t need = static_cast<size_t>(w) * h * 3;
  if (buf.size() - pos < need)
    throw IoError(path + ": truncated pixel data (expected " + std::to_string(need) + " bytes from offset " +
                  std::to_string(pos) + ")");
  Image img({channels, h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      size_t base = pos + (static_cast<size_t>(y) * w + x) * 3;
      if (channels == 3) {
        for (int c = 0; c < 3; ++c) img.at(c, y, x) = detail::from_byte(buf[base + c]);
      } else {
        // average to gray
        double g = (detail::from_byte(buf[base]) + detail::from_byte(buf[base + 1]) +
                    detail::from_byte(buf[base + 2])) /
                   3.0;
        img.at(0, y, x) = g;
      }
    }
  return img;
}

}  // namespace rbe
