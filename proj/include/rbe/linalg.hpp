#pragma once

#include <algorithm>
#include <functional>
#include <numeric>
#include <utility>

#include "rbe/rng.hpp"
#include "rbe/tensor.hpp"

// Matrix-free spectral routines: power iteration on the Gram operator
// J^T J with Hotelling deflation, modified Gram-Schmidt, and projection
// onto the orthogonal complement of a subspace.

namespace rbe {

inline Vec matvec(const Mat& m, const Vec& v) {
  require(static_cast<int>(v.size()) == m.cols, "matvec: v.len != m.cols");
  Vec r(static_cast<size_t>(m.rows), 0.0);
  for (int i = 0; i < m.rows; ++i) {
    double s = 0.0;
    const double* row = m.v.data() + static_cast<size_t>(i) * m.cols;
    for (int j = 0; j < m.cols; ++j) s += row[j] * v[static_cast<size_t>(j)];
    r[static_cast<size_t>(i)] = s;
  }
  return r;
}

inline Vec matvec_transposed(const Mat& m, const Vec& u) {
  require(static_cast<int>(u.size()) == m.rows, "matvec_transposed: u.len != m.rows");
  Vec r(static_cast<size_t>(m.cols), 0.0);
  for (int i = 0; i < m.rows; ++i) {
    const double* row = m.v.data() + static_cast<size_t>(i) * m.cols;
    double ui = u[static_cast<size_t>(i)];
    for (int j = 0; j < m.cols; ++j) r[static_cast<size_t>(j)] += row[j] * ui;
  }
  return r;
}

// Applies J^T J v through a jvp/vjp callback pair without materializing J.
template <class Jvp, class Vjp>
Vec gram_apply(Jvp&& jvp, Vjp&& vjp, const Vec& v) {
  Vec u = jvp(v);
  Vec r = vjp(u);
  require(r.size() == v.size(), "gram_apply: vjp output length != input length");
  check_finite(r, "gram_apply");
  return r;
}

/// Top eigenpairs of a symmetric PSD operator, reported as singular data
/// (singular_values[i] = sqrt(eigenvalue_i)).
struct SpectralResult {
  std::vector<double> singular_values;  // non-increasing
  std::vector<Vec> right_vectors;       // pairwise orthonormal
  std::vector<bool> converged;          // per vector; non-convergence is reported, never thrown

  bool all_converged() const {
    return std::all_of(converged.begin(), converged.end(), [](bool b) { return b; });
  }
};

namespace detail {

// Largest-magnitude entry made positive (first occurrence wins ties),
// so oracle comparisons are deterministic up to this convention.
inline void sign_normalize(Vec& v) {
  size_t best = 0;
  double mag = 0.0;
  for (size_t i = 0; i < v.size(); ++i) {
    double m = std::fabs(v[i]);
    if (m > mag) {
      mag = m;
      best = i;
    }
  }
  if (!v.empty() && v[best] < 0.0)
    for (auto& x : v) x = -x;
}

inline void orthogonalize_against(Vec& v, const std::vector<Vec>& basis) {
  for (const auto& q : basis) axpy(-dot(q, v), q, v);
}

}  // namespace detail

/// Power iteration with Hotelling deflation on a PSD operator of dimension
/// d_h. After each converged pair (lambda_i, v_i) the action lambda_i v_i
/// v_i^T is subtracted from subsequent applications. Convergence per vector:
/// successive iterate alignment 1 - |<v_n, v_{n+1}>| < tol, evaluated in the
/// cancellation-free form  0.5 * ||v_{n+1} - sign * v_n||^2.
///
/// Non-convergence after max_iters returns the best iterate with its
/// converged flag false; callers decide severity.
template <class GramFn>
SpectralResult power_iteration_topk(GramFn&& gram, int d_h, int k, double tol, int max_iters,
                                    Rng& rng) {
  require(d_h >= 1, "power_iteration_topk: d_h must be positive");
  require(k >= 1 && k <= d_h, "power_iteration_topk: need 1 <= k <= d_h");
  require(tol > 0.0, "power_iteration_topk: tol must be positive");
  require(max_iters >= 1, "power_iteration_topk: max_iters must be positive");

  SpectralResult out;
  std::vector<double> lambdas;

  for (int i = 0; i < k; ++i) {
    // Random unit start orthogonal to the pairs already found.
    Vec v;
    for (int attempt = 0; attempt < 64; ++attempt) {
      v = rng.gaussian_vec(d_h);
      detail::orthogonalize_against(v, out.right_vectors);
      double nv = norm(v);
      if (nv > 1e-8) {
        for (auto& x : v) x /= nv;
        break;
      }
      v.clear();
    }
    require(!v.empty(), "power_iteration_topk: could not draw a start vector");

    double lambda = 0.0;
    bool converged = false;
    for (int iter = 0; iter < max_iters; ++iter) {
      Vec w = gram(v);
      require(w.size() == v.size(), "power_iteration_topk: gram output length mismatch");
      // Hotelling deflation of converged pairs.
      for (size_t j = 0; j < lambdas.size(); ++j)
        axpy(-lambdas[j] * dot(out.right_vectors[j], v), out.right_vectors[j], w);
      // Kill round-off drift back into the found subspace.
      detail::orthogonalize_against(w, out.right_vectors);

      lambda = dot(v, w);  // Rayleigh quotient of the deflated operator
      double nw = norm(w);
      if (nw < 1e-280) {
        // Operator annihilates the remaining subspace; v is a valid
        // eigenvector for eigenvalue 0.
        lambda = 0.0;
        converged = true;
        break;
      }
      double s = lambda >= 0.0 ? 1.0 : -1.0;
      double dev2 = 0.0;
      for (size_t j = 0; j < v.size(); ++j) {
        double d = w[j] / nw - s * v[j];
        dev2 += d * d;
      }
      for (size_t j = 0; j < v.size(); ++j) v[j] = w[j] / nw;
      if (0.5 * dev2 < tol) {
        converged = true;
        break;
      }
    }

    detail::sign_normalize(v);
    lambdas.push_back(std::max(lambda, 0.0));
    out.right_vectors.push_back(std::move(v));
    out.converged.push_back(converged);
  }

  out.singular_values.resize(lambdas.size());
  for (size_t i = 0; i < lambdas.size(); ++i) out.singular_values[i] = std::sqrt(lambdas[i]);

  // Deflation normally yields non-increasing values; enforce it anyway.
  std::vector<size_t> idx(lambdas.size());
  std::iota(idx.begin(), idx.end(), size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](size_t a, size_t b) {
    return out.singular_values[a] > out.singular_values[b];
  });
  SpectralResult sorted;
  for (size_t i : idx) {
    sorted.singular_values.push_back(out.singular_values[i]);
    sorted.right_vectors.push_back(std::move(out.right_vectors[i]));
    sorted.converged.push_back(out.converged[i]);
  }
  return sorted;
}

/// Modified Gram-Schmidt, rank revealing: a vector whose residual after
/// orthogonalization falls below 1e-12 of its original norm is dropped.
inline std::vector<Vec> orthonormalize(const std::vector<Vec>& vs) {
  std::vector<Vec> out;
  for (const auto& v0 : vs) {
    if (!vs.empty()) require(v0.size() == vs.front().size(), "orthonormalize: mixed lengths");
    double orig = norm(v0);
    if (orig == 0.0) continue;
    Vec r = v0;
    detail::orthogonalize_against(r, out);
    double res = norm(r);
    if (res < 1e-12 * orig) continue;
    // Second sweep tightens orthogonality for ill-conditioned inputs.
    detail::orthogonalize_against(r, out);
    res = norm(r);
    if (res < 1e-12 * orig) continue;
    for (auto& x : r) x /= res;
    out.push_back(std::move(r));
  }
  return out;
}

/// v minus its projection onto span(basis); basis assumed orthonormal.
inline Vec project_complement(const Vec& v, const std::vector<Vec>& basis) {
  Vec r = v;
  for (const auto& q : basis) require(q.size() == v.size(), "project_complement: length mismatch");
  detail::orthogonalize_against(r, basis);
  detail::orthogonalize_against(r, basis);  // second sweep for 1e-10-grade residuals
  return r;
}

}  // namespace rbe
