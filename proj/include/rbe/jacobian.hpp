#pragma once

#include <memory>
#include <string>
#include <thread>
#include <vector>

#include "rbe/linalg.hpp"
#include "rbe/mask.hpp"
#include "rbe/predictor.hpp"
#include "rbe/serial.hpp"

// Masked Jacobians of the noise predictor w.r.t. h and the direction
// discovery that suppresses non-masked variation.
//
// The masked predictor is eps_masked = eps (.) mask, so its Jacobian J_m is
// the row-masked Jacobian of eps; J_u is the complement-masked analogue.
// Directions are top right singular vectors of J_m, optionally projected
// orthogonal to the dominant right singular vectors of J_u:
//
//   none       top-k right singular vectors of J_m
//   subspace   power iteration on v -> P J_m^T J_m P v, P = I - V_u V_u^T
//   frobenius  rank-1 correction  J_m - (<J_m,J_u>_F / <J_u,J_u>_F) J_u
//
// All Jacobian action is matrix-free central differencing; the d_h columns
// are materialized once per discovery run (2 d_h predictor calls) so the
// spectral iteration is exact with respect to the fd Jacobian.

namespace rbe {

enum class ProjectionMode { none = 0, frobenius = 1, subspace = 2 };

inline const char* projection_mode_name(ProjectionMode m) {
  switch (m) {
    case ProjectionMode::none: return "none";
    case ProjectionMode::frobenius: return "frobenius";
    case ProjectionMode::subspace: return "subspace";
  }
  return "?";
}

inline ProjectionMode projection_mode_from_name(const std::string& s) {
  if (s == "none") return ProjectionMode::none;
  if (s == "frobenius") return ProjectionMode::frobenius;
  if (s == "subspace") return ProjectionMode::subspace;
  throw ArgumentError("unknown projection mode \"" + s + "\" (none|frobenius|subspace)");
}

namespace detail {

struct ColumnCache {
  std::vector<Image> cols;  // fd Jacobian columns of the unmasked predictor
};

}  // namespace detail

template <Predictor M>
struct MaskedJacobianSpec {
  const M* model = nullptr;
  int t = 0;
  Image x_t;
  Vec h_base;
  Mask mask;
  double fd_step = 1e-4;  // relative scale; effective step is fd_step * (1 + ||h_base||)
  int jobs = 1;

  void validate() const {
    require(model != nullptr, "MaskedJacobianSpec: model is null");
    require(x_t.shape == model->image_shape(), "MaskedJacobianSpec: x_t shape mismatch");
    require(mask.h == x_t.shape.h && mask.w == x_t.shape.w, "MaskedJacobianSpec: mask H,W mismatch");
    require(static_cast<int>(h_base.size()) == model->d_h(), "MaskedJacobianSpec: h_base length != d_h");
    require(fd_step >= 1e-8 && fd_step <= 1e-2, "MaskedJacobianSpec: fd_step outside [1e-8, 1e-2]");
    require(jobs >= 1, "MaskedJacobianSpec: jobs must be >= 1");
  }

  double effective_step() const { return fd_step * (1.0 + norm(h_base)); }

  // columns cached across calls within one discovery run
  mutable std::shared_ptr<detail::ColumnCache> cache;
};

namespace detail {

// Central difference of the unmasked predictor along unit direction vhat,
// scaled back by the norm of the original v.
template <Predictor M>
Image fd_directional(const MaskedJacobianSpec<M>& spec, const Vec& v) {
  double nv = norm(v);
  require(nv >= 1e-14, "fd_jvp: direction norm below 1e-14");
  double delta = spec.effective_step();
  // the perturbation is expressed relative to the model's own bottleneck
  // value, so +/- step are exactly symmetric
  Vec dplus(v.size()), dminus(v.size());
  for (size_t i = 0; i < v.size(); ++i) {
    double step = delta * v[i] / nv;
    dplus[i] = step;
    dminus[i] = -step;
  }
  Image f_plus = spec.model->eval(spec.x_t, spec.t, dplus);
  Image f_minus = spec.model->eval(spec.x_t, spec.t, dminus);
  Image r(f_plus.shape);
  double inv = nv / (2.0 * delta);
  for (size_t i = 0; i < r.v.size(); ++i) r.v[i] = (f_plus.v[i] - f_minus.v[i]) * inv;
  if (!all_finite(r.v))
    throw Error("fd_jvp: non-finite output (t=" + std::to_string(spec.t) +
                ", fd_step=" + std::to_string(spec.fd_step) + ")");
  return r;
}

template <Predictor M>
const ColumnCache& ensure_columns(const MaskedJacobianSpec<M>& spec) {
  if (spec.cache) return *spec.cache;
  auto cache = std::make_shared<ColumnCache>();
  int dh = spec.model->d_h();
  cache->cols.resize(static_cast<size_t>(dh));
  auto work = [&](int begin, int end) {
    for (int i = begin; i < end; ++i)
      cache->cols[static_cast<size_t>(i)] = fd_directional(spec, basis_vec(dh, i));
  };
  int jobs = std::min(spec.jobs, dh);
  if (jobs <= 1) {
    work(0, dh);
  } else {
    std::vector<std::thread> threads;
    int chunk = (dh + jobs - 1) / jobs;
    for (int j = 0; j < jobs; ++j) {
      int begin = j * chunk, end = std::min(dh, begin + chunk);
      if (begin < end) threads.emplace_back(work, begin, end);
    }
    for (auto& th : threads) th.join();
  }
  spec.cache = std::move(cache);
  return *spec.cache;
}

inline double masked_image_norm_sq(const Image& img, const Mask& m, bool complement_region) {
  double s = 0.0;
  for (int c = 0; c < img.shape.c; ++c)
    for (int y = 0; y < img.shape.h; ++y)
      for (int x = 0; x < img.shape.w; ++x) {
        bool in = m.at(y, x) != 0;
        if (in != complement_region) {
          double v = img.at(c, y, x);
          s += v * v;
        }
      }
  return s;
}

}  // namespace detail

/// J_m v for the masked predictor, by one central difference along v.
template <Predictor M>
Image fd_jvp(const MaskedJacobianSpec<M>& spec, const Vec& v) {
  spec.validate();
  require(v.size() == spec.h_base.size(), "fd_jvp: v length != d_h");
  return apply_mask(detail::fd_directional(spec, v), spec.mask);
}

/// J_m^T u via the cached fd columns: component i = <mask (.) col_i, u>.
template <Predictor M>
Vec fd_vjp(const MaskedJacobianSpec<M>& spec, const Image& u) {
  spec.validate();
  require(u.shape == spec.x_t.shape, "fd_vjp: u shape mismatch");
  const auto& cache = detail::ensure_columns(spec);
  Image masked_u = apply_mask(u, spec.mask);  // mask is 0/1 so masking u once equals masking each column
  Vec r(cache.cols.size());
  for (size_t i = 0; i < cache.cols.size(); ++i) r[i] = image_dot(cache.cols[i], masked_u);
  check_finite(r, "fd_vjp");
  return r;
}

/// Ordered edit-direction candidates in h-space with their provenance.
struct DirectionSet {
  std::vector<Vec> directions;          // orthonormal, sign-normalized
  std::vector<double> singular_values;  // non-increasing
  int t = 0;
  int d_h = 0;
  ProjectionMode projection_mode = ProjectionMode::none;
  int unmasked_rank = 0;                // retained complement vectors (subspace mode)
  std::vector<bool> converged;
  bool frobenius_fallback = false;      // frobenius requested but J_u was numerically zero
  std::vector<Vec> complement_basis;    // retained V_u (in-memory only)
};

/// First-order in/out-region response of a unit direction, measured on the
/// unmasked predictor.
struct LeakageReport {
  double in_mask_norm = 0.0;
  double out_mask_norm = 0.0;
  double ratio = 0.0;
  bool in_zero = false;  // in_mask_norm vanished; ratio is meaningless
};

template <Predictor M>
LeakageReport leakage_report(const MaskedJacobianSpec<M>& spec, const Vec& dir) {
  spec.validate();
  require(std::fabs(norm(dir) - 1.0) <= 1e-6, "leakage_report: dir must be unit norm");
  Image response = detail::fd_directional(spec, dir);
  LeakageReport r;
  r.in_mask_norm = std::sqrt(detail::masked_image_norm_sq(response, spec.mask, false));
  r.out_mask_norm = std::sqrt(detail::masked_image_norm_sq(response, spec.mask, true));
  if (r.in_mask_norm <= 1e-300) {
    r.in_zero = true;
    r.ratio = 0.0;
  } else {
    r.ratio = r.out_mask_norm / r.in_mask_norm;
  }
  return r;
}

/// Top-k edit directions of the masked Jacobian under the selected
/// projection mode. k_u = 0 selects the complement rank automatically:
/// the smallest count capturing 99% of ||J_u||_F^2, capped at d_h - k.
template <Predictor M>
DirectionSet discover(const MaskedJacobianSpec<M>& spec, int k, ProjectionMode mode, int k_u,
                      double tol, int max_iters, Rng& rng) {
  spec.validate();
  int dh = spec.model->d_h();
  require(k >= 1 && k <= dh, "discover: need 1 <= k <= d_h");
  size_t n_in = spec.mask.ones();
  require(n_in > 0 && n_in < spec.mask.bits.size(),
          "discover: mask must select a non-empty proper region");
  if (mode == ProjectionMode::subspace)
    require(k_u >= 0, "discover: k_u must be >= 0 (0 = automatic)");

  const auto& cache = detail::ensure_columns(spec);

  auto masked_col_dot = [&](int i, int j, bool complement_region) {
    double s = 0.0;
    const Image& a = cache.cols[static_cast<size_t>(i)];
    const Image& b = cache.cols[static_cast<size_t>(j)];
    for (int c = 0; c < a.shape.c; ++c)
      for (int y = 0; y < a.shape.h; ++y)
        for (int x = 0; x < a.shape.w; ++x) {
          bool in = spec.mask.at(y, x) != 0;
          if (in != complement_region) s += a.at(c, y, x) * b.at(c, y, x);
        }
    return s;
  };

  // Small dense Grams of the masked and complement Jacobians; power
  // iteration then runs on d_h x d_h matvecs.
  auto build_gram = [&](bool complement_region) {
    Mat g(dh, dh);
    for (int i = 0; i < dh; ++i)
      for (int j = i; j < dh; ++j) {
        double v = masked_col_dot(i, j, complement_region);
        g.at(i, j) = v;
        g.at(j, i) = v;
      }
    return g;
  };

  DirectionSet out;
  out.t = spec.t;
  out.d_h = dh;
  out.projection_mode = mode;

  Mat gram_m = build_gram(false);

  if (mode == ProjectionMode::frobenius) {
    double ju_f2 = 0.0, jm_f2 = 0.0, cross_f = 0.0;
    for (int i = 0; i < dh; ++i) {
      ju_f2 += masked_col_dot(i, i, true);
      jm_f2 += gram_m.at(i, i);
      // <J_m, J_u>_F accumulated column by column. The row supports are
      // disjoint, so this is exactly zero for mask-derived Jacobians; it is
      // still evaluated literally.
      const Image& col = cache.cols[static_cast<size_t>(i)];
      Image in_part = apply_mask(col, spec.mask);
      Image out_part = apply_mask(col, complement(spec.mask));
      cross_f += image_dot(in_part, out_part);
    }
    if (ju_f2 <= 1e-28 * std::max(jm_f2, 1e-300)) {
      out.frobenius_fallback = true;
      mode = ProjectionMode::none;
    } else {
      double c = cross_f / ju_f2;
      // Gram of J = J_m - c J_u. The mixed terms J_m^T J_u vanish entry by
      // entry (disjoint supports), leaving gram_m + c^2 gram_u.
      Mat g(dh, dh);
      for (int i = 0; i < dh; ++i)
        for (int j = i; j < dh; ++j) {
          double v = gram_m.at(i, j) + c * c * masked_col_dot(i, j, true);
          g.at(i, j) = v;
          g.at(j, i) = v;
        }
      gram_m = g;
    }
  }

  std::vector<Vec> v_u;
  if (mode == ProjectionMode::subspace) {
    Mat gram_u = build_gram(true);
    double ju_f2 = 0.0;
    for (int i = 0; i < dh; ++i) ju_f2 += gram_u.at(i, i);
    if (ju_f2 > 0.0) {
      int cap = k_u > 0 ? k_u : dh - k;
      require(k + cap <= dh, "discover: k + k_u must be <= d_h in subspace mode");
      if (cap > 0) {
        auto gram_u_fn = [&](const Vec& v) { return matvec(gram_u, v); };
        SpectralResult su = power_iteration_topk(gram_u_fn, dh, cap, tol, max_iters, rng);
        if (k_u > 0) {
          v_u = su.right_vectors;
        } else {
          // automatic: smallest count capturing 99% of the complement energy
          double captured = 0.0;
          for (size_t i = 0; i < su.right_vectors.size(); ++i) {
            captured += su.singular_values[i] * su.singular_values[i];
            v_u.push_back(su.right_vectors[i]);
            if (captured >= 0.99 * ju_f2) break;
          }
        }
      }
    }
    out.unmasked_rank = static_cast<int>(v_u.size());
    out.complement_basis = v_u;
  }

  auto op = [&](const Vec& v) {
    if (v_u.empty()) return matvec(gram_m, v);
    Vec pv = project_complement(v, v_u);
    Vec gpv = matvec(gram_m, pv);
    return project_complement(gpv, v_u);
  };

  SpectralResult sr = power_iteration_topk(op, dh, k, tol, max_iters, rng);
  out.directions = std::move(sr.right_vectors);
  out.singular_values = std::move(sr.singular_values);
  out.converged = std::move(sr.converged);

  // Candidates live in the complement by construction; pin the invariant
  // down to round-off anyway.
  if (!v_u.empty()) {
    for (auto& d : out.directions) {
      d = project_complement(d, v_u);
      double n = norm(d);
      if (n > 1e-300)
        for (auto& x : d) x /= n;
      detail::sign_normalize(d);
    }
  }
  return out;
}

// --- RBED direction-set file ---------------------------------------------
// magic "RBED", u32 version=1, u32 t, u32 k, u32 d_h, u32 projection mode,
// u32 k_u, f64 singular values [k], f64 directions row-major [k, d_h],
// trailing CRC32.

inline void save_direction_set(const DirectionSet& ds, const std::string& path) {
  ByteWriter wr;
  wr.magic("RBED");
  wr.u32(1);
  wr.u32(static_cast<uint32_t>(ds.t));
  wr.u32(static_cast<uint32_t>(ds.directions.size()));
  wr.u32(static_cast<uint32_t>(ds.d_h));
  wr.u32(static_cast<uint32_t>(ds.projection_mode));
  wr.u32(static_cast<uint32_t>(ds.unmasked_rank));
  wr.f64_span(ds.singular_values);
  for (const auto& d : ds.directions) wr.f64_span(d);
  atomic_write_file(path, wr.finish());
}

inline DirectionSet load_direction_set(const std::string& path) {
  ByteReader rd(read_file_bytes(path), path);
  rd.expect_magic("RBED");
  rd.check_crc();
  uint32_t version = rd.u32("version");
  if (version != 1) throw IoError(path + ": unsupported version " + std::to_string(version) + " (expected 1)");
  DirectionSet ds;
  ds.t = static_cast<int>(rd.u32("t"));
  uint32_t k = rd.u32("k");
  ds.d_h = static_cast<int>(rd.u32("d_h"));
  uint32_t mode = rd.u32("projection mode");
  if (mode > 2) throw IoError(path + ": projection mode code " + std::to_string(mode) + " (expected 0..2)");
  ds.projection_mode = static_cast<ProjectionMode>(mode);
  ds.unmasked_rank = static_cast<int>(rd.u32("k_u"));
  ds.singular_values = rd.f64_span(k, "singular values");
  for (uint32_t i = 0; i < k; ++i) ds.directions.push_back(rd.f64_span(static_cast<size_t>(ds.d_h), "directions"));
  rd.expect_payload_end();
  ds.converged.assign(k, true);
  check_finite(ds.singular_values, path + ": singular values");
  for (const auto& d : ds.directions) check_finite(d, path + ": directions");
  return ds;
}

}  // namespace rbe
