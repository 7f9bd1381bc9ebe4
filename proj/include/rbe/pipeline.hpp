#pragma once

#include <utility>
#include <vector>

#include "rbe/jacobian.hpp"
#include "rbe/predictor.hpp"
#include "rbe/rng.hpp"
#include "rbe/schedule.hpp"

// End-to-end orchestration: deterministic inversion of an input image,
// direction discovery at a reference timestep, and regeneration with the
// latent shift injected into the P channel over a timestep window.

namespace rbe {

struct EditPlan {
  Vec delta_h;                       // unit edit direction (resolved from a DirectionSet)
  double alpha = 0.0;                // edit intensity
  int t_hi = 0, t_lo = 0;            // inject for t in (t_lo, t_hi]
  enum class Injection { asymmetric, symmetric };
  Injection injection = Injection::asymmetric;
  std::vector<double> per_t_gain;    // optional, indexed by t (size T+1); empty = all ones

  void validate(const Schedule& s) const {
    require(!delta_h.empty(), "EditPlan: empty direction");
    require(std::isfinite(alpha), "EditPlan: alpha must be finite");
    require(s.T >= t_hi && t_hi > t_lo && t_lo >= 0, "EditPlan: window must satisfy T >= t_hi > t_lo >= 0");
    if (!per_t_gain.empty())
      require(static_cast<int>(per_t_gain.size()) == s.T + 1, "EditPlan: per_t_gain must have T+1 entries");
  }

  bool active_at(int t) const { return t > t_lo && t <= t_hi; }
  double gain_at(int t) const {
    return per_t_gain.empty() ? 1.0 : per_t_gain[static_cast<size_t>(t)];
  }
};

inline EditPlan make_plan(const DirectionSet& ds, int index, double alpha, int t_hi, int t_lo,
                          EditPlan::Injection injection = EditPlan::Injection::asymmetric) {
  require(index >= 0 && index < static_cast<int>(ds.directions.size()),
          "make_plan: direction index out of range");
  EditPlan p;
  p.delta_h = ds.directions[static_cast<size_t>(index)];
  p.alpha = alpha;
  p.t_hi = t_hi;
  p.t_lo = t_lo;
  p.injection = injection;
  return p;
}

/// The stored inversion trajectory: x_t and the bottleneck h_t at every
/// t = 0..T.
struct Trajectory {
  std::vector<Image> x;
  std::vector<Vec> h;
  uint64_t seed = 0;
  int T = 0;
};

/// Deterministic inversion of x0 up to x_T. Each step evaluates eps at the
/// current state but at the target timestep, approximating the eps the
/// reverse step would use; with eps held fixed the update is the exact
/// inverse of the reverse step.
template <Predictor M>
Trajectory invert(const M& model, const Schedule& s, const Image& x0) {
  require(s.eta == 0.0, "invert: requires eta = 0");
  require(x0.shape == model.image_shape(), "invert: x0 shape mismatch");
  Trajectory traj;
  traj.T = s.T;
  traj.x.reserve(static_cast<size_t>(s.T) + 1);
  traj.h.reserve(static_cast<size_t>(s.T) + 1);
  traj.x.push_back(x0);
  traj.h.push_back(model.extract_h(x0, 0));
  for (int t = 0; t < s.T; ++t) {
    Image eps = model.eval(traj.x.back(), t + 1);
    traj.x.push_back(ddim_invert_step(s, t, traj.x.back(), eps));
    traj.h.push_back(model.extract_h(traj.x.back(), t + 1));
  }
  return traj;
}

/// Full reverse sampling from x_T. When a plan is given and t lies in its
/// window, eps for the P channel is evaluated with alpha * gain_t * delta_h
/// added to the bottleneck; the D channel keeps the unmodified prediction
/// (asymmetric) or shares the shifted one (symmetric). When trace is given
/// it receives x_{t-1} after every step, x_0 last.
template <Predictor M>
Image generate(const M& model, const Schedule& s, const Image& x_T, const EditPlan* plan,
               uint64_t seed, std::vector<Image>* trace = nullptr) {
  require(x_T.shape == model.image_shape(), "generate: x_T shape mismatch");
  if (plan) plan->validate(s);
  Rng rng(seed, /*stream=*/2);
  Image x = x_T;
  for (int t = s.T; t >= 1; --t) {
    Image eps_d = model.eval(x, t);
    Image eps_p = eps_d;
    if (plan && plan->active_at(t)) {
      Vec shift = scaled(plan->delta_h, plan->alpha * plan->gain_at(t));
      eps_p = model.eval(x, t, shift);
      if (plan->injection == EditPlan::Injection::symmetric) eps_d = eps_p;
    }
    Image z;
    if (sigma_t(s, t) > 0.0) z = rng.fill_gaussian(x.shape);
    x = reverse_step(s, t, x, eps_p, eps_d, z).x_prev;
    if (trace) trace->push_back(x);
  }
  return x;
}

struct EditResult {
  Trajectory trajectory;
  DirectionSet directions;
  std::vector<std::pair<double, Image>> images;  // (alpha, image); alpha = 0 entry first
  int t_ref = 0;
};

struct EditOptions {
  int k = 3;
  int k_u = 0;  // 0 = automatic
  ProjectionMode projection_mode = ProjectionMode::subspace;
  double fd_step = 1e-4;
  double tol = 1e-9;
  int max_iters = 10000;
  int direction_index = 0;
  int t_hi = 0, t_lo = 0;  // 0,0 = default window (0.8 T, 0.4 T]
  EditPlan::Injection injection = EditPlan::Injection::asymmetric;
  int t_ref = 0;  // 0 = window midpoint
  int jobs = 1;
  uint64_t seed = 0;
};

/// invert -> discover at the reference timestep -> regenerate once per
/// alpha. The unedited reconstruction (alpha = 0) is always included first.
template <Predictor M>
EditResult edit(const M& model, const Schedule& s, const Image& x0, const Mask& mask, int k,
                const std::vector<double>& alpha_list, EditOptions opt = {}) {
  opt.k = k;
  int t_hi = opt.t_hi > 0 ? opt.t_hi : std::max(1, static_cast<int>(0.8 * s.T));
  int t_lo = opt.t_hi > 0 ? opt.t_lo : static_cast<int>(0.4 * s.T);
  require(s.T >= t_hi && t_hi > t_lo && t_lo >= 0, "edit: invalid timestep window");
  int t_ref = opt.t_ref > 0 ? opt.t_ref : std::max(1, (t_hi + t_lo + 1) / 2);
  require(t_ref >= 1 && t_ref <= s.T, "edit: reference timestep outside schedule");

  EditResult res;
  res.t_ref = t_ref;
  res.trajectory = invert(model, s, x0);

  MaskedJacobianSpec<M> jspec;
  jspec.model = &model;
  jspec.t = t_ref;
  jspec.x_t = res.trajectory.x[static_cast<size_t>(t_ref)];
  jspec.h_base = res.trajectory.h[static_cast<size_t>(t_ref)];
  jspec.mask = mask;
  jspec.fd_step = opt.fd_step;
  jspec.jobs = opt.jobs;

  Rng rng(opt.seed, /*stream=*/3);
  res.directions = discover(jspec, opt.k, opt.projection_mode, opt.k_u, opt.tol, opt.max_iters, rng);

  std::vector<double> alphas = {0.0};
  for (double a : alpha_list)
    if (a != 0.0) alphas.push_back(a);

  const Image& x_T = res.trajectory.x.back();
  for (double a : alphas) {
    EditPlan plan = make_plan(res.directions, opt.direction_index, a, t_hi, t_lo, opt.injection);
    Image img = generate(model, s, x_T, a == 0.0 ? nullptr : &plan, opt.seed);
    res.images.emplace_back(a, std::move(img));
  }
  return res;
}

// --- RBET trajectory cache file -------------------------------------------
// magic "RBET", u32 version=1, u32 T, u32 stored count, u32 t list,
// u32 C,H,W,d_h, then per stored t: x (C*H*W f64) and h (d_h f64);
// trailing CRC32.

inline void save_trajectory(const Trajectory& traj, const std::string& path) {
  require(traj.x.size() == traj.h.size() && !traj.x.empty(), "save_trajectory: inconsistent trajectory");
  ByteWriter wr;
  wr.magic("RBET");
  wr.u32(1);
  wr.u32(static_cast<uint32_t>(traj.T));
  wr.u32(static_cast<uint32_t>(traj.x.size()));
  for (size_t t = 0; t < traj.x.size(); ++t) wr.u32(static_cast<uint32_t>(t));
  Shape3 sh = traj.x.front().shape;
  wr.u32(static_cast<uint32_t>(sh.c));
  wr.u32(static_cast<uint32_t>(sh.h));
  wr.u32(static_cast<uint32_t>(sh.w));
  wr.u32(static_cast<uint32_t>(traj.h.front().size()));
  for (size_t t = 0; t < traj.x.size(); ++t) {
    wr.f64_span(traj.x[t].v);
    wr.f64_span(traj.h[t]);
  }
  atomic_write_file(path, wr.finish());
}

inline Trajectory load_trajectory(const std::string& path) {
  ByteReader rd(read_file_bytes(path), path);
  rd.expect_magic("RBET");
  rd.check_crc();
  uint32_t version = rd.u32("version");
  if (version != 1) throw IoError(path + ": unsupported version " + std::to_string(version) + " (expected 1)");
  Trajectory traj;
  traj.T = static_cast<int>(rd.u32("T"));
  uint32_t count = rd.u32("stored count");
  std::vector<uint32_t> ts(count);
  for (auto& t : ts) t = rd.u32("t list");
  Shape3 sh{static_cast<int>(rd.u32("C")), static_cast<int>(rd.u32("H")), static_cast<int>(rd.u32("W"))};
  uint32_t dh = rd.u32("d_h");
  for (uint32_t i = 0; i < count; ++i) {
    Image img(sh);
    img.v = rd.f64_span(static_cast<size_t>(sh.numel()), "x tensor");
    traj.x.push_back(std::move(img));
    traj.h.push_back(rd.f64_span(dh, "h tensor"));
  }
  rd.expect_payload_end();
  return traj;
}

}  // namespace rbe
