#pragma once

#include <algorithm>
#include <numeric>

#include "rbe/linalg.hpp"
#include "rbe/tensor.hpp"

// Dense one-sided Jacobi SVD on an explicit matrix. This is the brute-force
// reference route used by the verification suite and the tests; it shares no
// code with the matrix-free power iteration it cross-checks.

namespace rbe {

struct DenseSvd {
  std::vector<double> singular_values;  // non-increasing
  Mat right;                            // cols x cols, right singular vectors in columns
};

inline DenseSvd dense_svd_jacobi(const Mat& a_in, double eps = 1e-14, int max_sweeps = 60) {
  const int m = a_in.rows, n = a_in.cols;
  Mat a = a_in;
  Mat v = Mat::identity(n);

  auto col_dot = [&](const Mat& x, int rows, int i, int j) {
    double s = 0.0;
    for (int r = 0; r < rows; ++r) s += x.at(r, i) * x.at(r, j);
    return s;
  };
  auto rotate_cols = [&](Mat& x, int rows, int i, int j, double c, double s) {
    for (int r = 0; r < rows; ++r) {
      double xi = x.at(r, i), xj = x.at(r, j);
      x.at(r, i) = c * xi - s * xj;
      x.at(r, j) = s * xi + c * xj;
    }
  };

  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    bool rotated = false;
    for (int i = 0; i < n - 1; ++i) {
      for (int j = i + 1; j < n; ++j) {
        double alpha = col_dot(a, m, i, i);
        double beta = col_dot(a, m, j, j);
        double gamma = col_dot(a, m, i, j);
        if (std::fabs(gamma) <= eps * std::sqrt(alpha * beta) || gamma == 0.0) continue;
        rotated = true;
        double zeta = (beta - alpha) / (2.0 * gamma);
        double t = (zeta >= 0.0 ? 1.0 : -1.0) / (std::fabs(zeta) + std::sqrt(1.0 + zeta * zeta));
        double c = 1.0 / std::sqrt(1.0 + t * t);
        double s = c * t;
        rotate_cols(a, m, i, j, c, s);
        rotate_cols(v, n, i, j, c, s);
      }
    }
    if (!rotated) break;
  }

  std::vector<double> sig(static_cast<size_t>(n));
  for (int j = 0; j < n; ++j) sig[static_cast<size_t>(j)] = std::sqrt(col_dot(a, m, j, j));

  std::vector<int> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int x, int y) { return sig[static_cast<size_t>(x)] > sig[static_cast<size_t>(y)]; });

  DenseSvd out;
  out.singular_values.resize(static_cast<size_t>(n));
  out.right = Mat(n, n);
  for (int jj = 0; jj < n; ++jj) {
    int src = order[static_cast<size_t>(jj)];
    out.singular_values[static_cast<size_t>(jj)] = sig[static_cast<size_t>(src)];
    Vec col(static_cast<size_t>(n));
    for (int r = 0; r < n; ++r) col[static_cast<size_t>(r)] = v.at(r, src);
    detail::sign_normalize(col);
    for (int r = 0; r < n; ++r) out.right.at(r, jj) = col[static_cast<size_t>(r)];
  }
  return out;
}

inline Vec dense_svd_right_vector(const DenseSvd& s, int j) {
  Vec col(static_cast<size_t>(s.right.rows));
  for (int r = 0; r < s.right.rows; ++r) col[static_cast<size_t>(r)] = s.right.at(r, j);
  return col;
}

// Angle between unit vectors under sign equivalence, stable near zero.
inline double vector_angle(const Vec& a, const Vec& b) {
  double d = dot(a, b);
  double s = d >= 0.0 ? 1.0 : -1.0;
  double chord2 = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    double diff = a[i] - s * b[i];
    chord2 += diff * diff;
  }
  double half = 0.5 * std::sqrt(chord2);
  return 2.0 * std::asin(std::min(1.0, half));
}

// Principal angles between equal-dimension subspaces spanned by orthonormal
// bases, via the SVD of the cross-Gram matrix.
inline std::vector<double> principal_angles(const std::vector<Vec>& qa, const std::vector<Vec>& qb) {
  require(qa.size() == qb.size() && !qa.empty(), "principal_angles: bases must match in size");
  int p = static_cast<int>(qa.size());
  Mat cross(p, p);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j) cross.at(i, j) = dot(qa[static_cast<size_t>(i)], qb[static_cast<size_t>(j)]);
  DenseSvd s = dense_svd_jacobi(cross);
  std::vector<double> angles;
  for (double c : s.singular_values) angles.push_back(std::acos(std::min(1.0, std::max(-1.0, c))));
  return angles;
}

}  // namespace rbe
