#pragma once

#include <string>

#include "rbe/config.hpp"
#include "rbe/image_io.hpp"
#include "rbe/mask.hpp"
#include "rbe/predictor.hpp"
#include "rbe/rng.hpp"
#include "rbe/schedule.hpp"

// Construction of schedule, model, mask, and input image from a RunConfig.

namespace rbe {

inline Schedule build_schedule(const RunConfig& cfg) {
  return make_linear_schedule(cfg.schedule_T, cfg.beta_start, cfg.beta_end, cfg.eta);
}

/// Analytic model with a deterministic conditioning map: mu0 is a smooth
/// seeded pattern, W has gaussian columns whose scales decay geometrically
/// so the complement spectrum has a usable energy cutoff.
inline AnalyticGaussianModel build_analytic_model(const RunConfig& cfg, const Schedule& s) {
  Rng rng(cfg.analytic_seed, /*stream=*/1);
  Shape3 shape = cfg.analytic_image;
  Image mu0 = rng.fill_gaussian(shape);
  for (auto& x : mu0.v) x *= cfg.analytic_mu_scale;
  Mat w(shape.numel(), cfg.analytic_d_h);
  double col_scale = cfg.analytic_w_scale;
  for (int j = 0; j < w.cols; ++j) {
    for (int i = 0; i < w.rows; ++i) w.at(i, j) = col_scale * rng.next_gaussian();
    col_scale *= cfg.analytic_w_decay;
  }
  return AnalyticGaussianModel(std::move(mu0), std::move(w), cfg.analytic_s2, s);
}

inline TinyUNetModel build_tinynet_model(const RunConfig& cfg) {
  if (!cfg.tinynet_weights.empty()) return load_weights(cfg.tinynet_weights);
  return init_random(cfg.tinynet_seed, cfg.tinynet_d_h, cfg.tinynet_image,
                     {cfg.tinynet_c1, cfg.tinynet_c2}, cfg.schedule_T);
}

inline Mask build_mask(const RunConfig& cfg, Shape3 image_shape) {
  if (cfg.mask_type == "rect")
    return rect_mask(image_shape.h, image_shape.w, cfg.rect_top, cfg.rect_left, cfg.rect_height,
                     cfg.rect_width);
  require(!cfg.mask_pgm.empty(), "config: mask.type=pgm needs mask.pgm path");
  Mask m = load_mask_pgm(cfg.mask_pgm);
  require(m.h == image_shape.h && m.w == image_shape.w,
          "config: mask raster is " + std::to_string(m.w) + "x" + std::to_string(m.h) +
              " but the image is " + std::to_string(image_shape.w) + "x" +
              std::to_string(image_shape.h));
  return m;
}

template <Predictor M>
Image build_x0(const RunConfig& cfg, const M& model) {
  if (cfg.input_x0 != "sample") return load_image_ppm(cfg.input_x0, model.image_shape().c);
  Rng rng(cfg.seed, /*stream=*/1);
  Image z = rng.fill_gaussian(model.image_shape());
  Image x0 = image_scaled(z, cfg.input_noise);
  if constexpr (std::is_same_v<M, AnalyticGaussianModel>) {
    // perturb around the model mean so inversion starts on-manifold
    x0 = image_add(x0, model.mu0());
  }
  return x0;
}

/// The timestep window actually used for editing, after defaulting.
inline std::pair<int, int> resolve_window(const RunConfig& cfg, int T) {
  int t_hi = cfg.t_hi > 0 ? cfg.t_hi : std::max(1, static_cast<int>(0.8 * T));
  int t_lo = cfg.t_hi > 0 ? cfg.t_lo : static_cast<int>(0.4 * T);
  require(T >= t_hi && t_hi > t_lo && t_lo >= 0, "config: edit window must satisfy T >= t_hi > t_lo >= 0");
  return {t_hi, t_lo};
}

inline int resolve_t_ref(const RunConfig& cfg, int T) {
  if (cfg.t_ref > 0) {
    require(cfg.t_ref <= T, "config: discovery.t_ref outside schedule");
    return cfg.t_ref;
  }
  auto [t_hi, t_lo] = resolve_window(cfg, T);
  return std::max(1, (t_hi + t_lo + 1) / 2);
}

}  // namespace rbe
