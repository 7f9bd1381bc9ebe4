#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

// Dense f64 tensors at desk scale. Everything is value-semantic and
// row-major; no views, no strides.

namespace rbe {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Precondition / contract violations (dimension mismatches, bad ranges).
class ArgumentError : public Error {
 public:
  using Error::Error;
};

// File format and filesystem failures.
class IoError : public Error {
 public:
  using Error::Error;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ArgumentError(msg);
}

// A point or direction in h-space.
using Vec = std::vector<double>;

struct Shape3 {
  int c = 0;
  int h = 0;
  int w = 0;

  int numel() const { return c * h * w; }
  bool operator==(const Shape3& o) const { return c == o.c && h == o.h && w == o.w; }
  bool operator!=(const Shape3& o) const { return !(*this == o); }
  std::string str() const {
    return std::to_string(c) + "x" + std::to_string(h) + "x" + std::to_string(w);
  }
};

// Pixel-space tensor [C,H,W].
struct Image {
  Shape3 shape;
  std::vector<double> v;

  Image() = default;
  explicit Image(Shape3 s, double fill = 0.0) : shape(s), v(static_cast<size_t>(s.numel()), fill) {}

  double& at(int c, int y, int x) { return v[(static_cast<size_t>(c) * shape.h + y) * shape.w + x]; }
  double at(int c, int y, int x) const { return v[(static_cast<size_t>(c) * shape.h + y) * shape.w + x]; }
  size_t size() const { return v.size(); }
};

// Row-major dense matrix.
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<double> v;

  Mat() = default;
  Mat(int r, int c, double fill = 0.0) : rows(r), cols(c), v(static_cast<size_t>(r) * c, fill) {
    require(r > 0 && c > 0, "Mat dimensions must be positive");
  }

  double& at(int i, int j) { return v[static_cast<size_t>(i) * cols + j]; }
  double at(int i, int j) const { return v[static_cast<size_t>(i) * cols + j]; }

  static Mat identity(int n) {
    Mat m(n, n);
    for (int i = 0; i < n; ++i) m.at(i, i) = 1.0;
    return m;
  }
};

inline double dot(const Vec& a, const Vec& b) {
  require(a.size() == b.size(), "dot: length mismatch");
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm(const Vec& a) { return std::sqrt(dot(a, a)); }

inline void axpy(double alpha, const Vec& x, Vec& y) {
  require(x.size() == y.size(), "axpy: length mismatch");
  for (size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline Vec scaled(const Vec& x, double alpha) {
  Vec r(x.size());
  for (size_t i = 0; i < x.size(); ++i) r[i] = alpha * x[i];
  return r;
}

inline Vec basis_vec(int n, int i) {
  Vec e(static_cast<size_t>(n), 0.0);
  e[static_cast<size_t>(i)] = 1.0;
  return e;
}

inline double image_dot(const Image& a, const Image& b) {
  require(a.shape == b.shape, "image_dot: shape mismatch");
  double s = 0.0;
  for (size_t i = 0; i < a.v.size(); ++i) s += a.v[i] * b.v[i];
  return s;
}

inline double image_norm(const Image& a) { return std::sqrt(image_dot(a, a)); }

inline Image image_add(const Image& a, const Image& b) {
  require(a.shape == b.shape, "image_add: shape mismatch");
  Image r = a;
  for (size_t i = 0; i < r.v.size(); ++i) r.v[i] += b.v[i];
  return r;
}

inline Image image_sub(const Image& a, const Image& b) {
  require(a.shape == b.shape, "image_sub: shape mismatch");
  Image r = a;
  for (size_t i = 0; i < r.v.size(); ++i) r.v[i] -= b.v[i];
  return r;
}

inline Image image_scaled(const Image& a, double s) {
  Image r = a;
  for (auto& x : r.v) x *= s;
  return r;
}

inline double image_rms(const Image& a) {
  if (a.v.empty()) return 0.0;
  return image_norm(a) / std::sqrt(static_cast<double>(a.v.size()));
}

inline bool all_finite(const std::vector<double>& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

inline void check_finite(const std::vector<double>& v, const std::string& what) {
  if (!all_finite(v)) throw Error(what + ": non-finite entries");
}

}  // namespace rbe
