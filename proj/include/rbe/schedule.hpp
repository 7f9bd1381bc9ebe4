#pragma once

#include <vector>

#include "rbe/tensor.hpp"

// Noise schedule and the P_t / D_t decomposition of the reverse step,
//
//   x_{t-1} = sqrt(abar_{t-1}) P_t + D_t + sigma_t z,
//   P_t = (x_t - sqrt(1-abar_t) eps) / sqrt(abar_t),
//   D_t = sqrt(1 - abar_{t-1} - sigma_t^2) eps,
//
// with alpha_bar the cumulative product (DDIM convention) and
// sigma_t = eta * sqrt((1-abar_{t-1})/(1-abar_t)) * sqrt(1 - abar_t/abar_{t-1}).
// eta = 0 is the deterministic sampler, eta = 1 the ancestral one.
//
// reverse_step takes separate eps inputs for the P and D channels so a
// latent shift can be injected into P only (asymmetric editing); passing
// the same eps twice reproduces the standard step bit-exactly.

namespace rbe {

struct Schedule {
  int T = 0;
  std::vector<double> alpha_bar;  // size T+1, alpha_bar[0] = 1 sentinel
  double eta = 0.0;

  void validate() const {
    require(T >= 1, "Schedule: T must be >= 1");
    require(static_cast<int>(alpha_bar.size()) == T + 1, "Schedule: alpha_bar must have T+1 entries");
    require(alpha_bar[0] == 1.0, "Schedule: alpha_bar[0] must be 1");
    require(eta >= 0.0 && eta <= 1.0, "Schedule: eta must be in [0,1]");
    for (int t = 1; t <= T; ++t) {
      require(alpha_bar[t] > 0.0 && alpha_bar[t] <= 1.0, "Schedule: alpha_bar out of (0,1]");
      require(alpha_bar[t] < alpha_bar[t - 1], "Schedule: alpha_bar must be strictly decreasing");
    }
  }

  void check_t(int t) const {
    require(t >= 1 && t <= T, "Schedule: timestep " + std::to_string(t) + " outside [1," +
                                  std::to_string(T) + "]");
  }
};

inline Schedule make_linear_schedule(int T, double beta_start, double beta_end, double eta) {
  require(T >= 1, "make_linear_schedule: T must be >= 1");
  require(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0,
          "make_linear_schedule: need 0 < beta_start <= beta_end < 1");
  Schedule s;
  s.T = T;
  s.eta = eta;
  s.alpha_bar.assign(static_cast<size_t>(T) + 1, 1.0);
  double prod = 1.0;
  for (int t = 1; t <= T; ++t) {
    double beta = (T == 1) ? beta_start
                           : beta_start + (beta_end - beta_start) * (t - 1) / static_cast<double>(T - 1);
    prod *= 1.0 - beta;
    s.alpha_bar[static_cast<size_t>(t)] = prod;
  }
  s.validate();
  return s;
}

inline double sigma_t(const Schedule& s, int t) {
  s.check_t(t);
  if (s.eta == 0.0) return 0.0;
  double ab = s.alpha_bar[static_cast<size_t>(t)];
  double ab_prev = s.alpha_bar[static_cast<size_t>(t) - 1];
  return s.eta * std::sqrt((1.0 - ab_prev) / (1.0 - ab)) * std::sqrt(1.0 - ab / ab_prev);
}

inline Image p_term(const Schedule& s, int t, const Image& x_t, const Image& eps) {
  s.check_t(t);
  require(x_t.shape == eps.shape, "p_term: shape mismatch");
  double ab = s.alpha_bar[static_cast<size_t>(t)];
  double c_eps = std::sqrt(1.0 - ab);
  double inv = 1.0 / std::sqrt(ab);
  Image r(x_t.shape);
  for (size_t i = 0; i < r.v.size(); ++i) r.v[i] = (x_t.v[i] - c_eps * eps.v[i]) * inv;
  return r;
}

inline Image d_term(const Schedule& s, int t, const Image& eps) {
  s.check_t(t);
  double ab_prev = s.alpha_bar[static_cast<size_t>(t) - 1];
  double sig = sigma_t(s, t);
  double c = std::sqrt(std::max(0.0, 1.0 - ab_prev - sig * sig));
  return image_scaled(eps, c);
}

struct StepOutput {
  Image x_prev;
  Image p;
  Image d;
};

/// One reverse step with independent eps for the P and D channels. z is the
/// caller-drawn standard normal; it is ignored when eta = 0 and may then be
/// an empty image.
inline StepOutput reverse_step(const Schedule& s, int t, const Image& x_t, const Image& eps_for_p,
                               const Image& eps_for_d, const Image& z) {
  s.check_t(t);
  require(x_t.shape == eps_for_p.shape && x_t.shape == eps_for_d.shape,
          "reverse_step: eps shape mismatch");
  StepOutput out;
  out.p = p_term(s, t, x_t, eps_for_p);
  out.d = d_term(s, t, eps_for_d);
  double sqrt_ab_prev = std::sqrt(s.alpha_bar[static_cast<size_t>(t) - 1]);
  double sig = sigma_t(s, t);
  out.x_prev = Image(x_t.shape);
  if (sig > 0.0) require(z.shape == x_t.shape, "reverse_step: z shape mismatch");
  for (size_t i = 0; i < out.x_prev.v.size(); ++i) {
    double noise = sig > 0.0 ? sig * z.v[i] : 0.0;
    out.x_prev.v[i] = sqrt_ab_prev * out.p.v[i] + out.d.v[i] + noise;
  }
  return out;
}

/// Deterministic inversion update x_t -> x_{t+1}; the exact algebraic
/// inverse of the eta = 0 reverse step when eps is held fixed.
inline Image ddim_invert_step(const Schedule& s, int t, const Image& x_t, const Image& eps) {
  require(s.eta == 0.0, "ddim_invert_step: inversion requires eta = 0");
  require(t >= 0 && t < s.T, "ddim_invert_step: timestep " + std::to_string(t) + " outside [0," +
                                 std::to_string(s.T - 1) + "]");
  require(x_t.shape == eps.shape, "ddim_invert_step: shape mismatch");
  double ab = s.alpha_bar[static_cast<size_t>(t)];
  double ab_next = s.alpha_bar[static_cast<size_t>(t) + 1];
  double c0 = std::sqrt(ab_next / ab);
  double c1 = std::sqrt(1.0 - ab_next) - c0 * std::sqrt(1.0 - ab);
  Image r(x_t.shape);
  for (size_t i = 0; i < r.v.size(); ++i) r.v[i] = c0 * x_t.v[i] + c1 * eps.v[i];
  return r;
}

}  // namespace rbe
