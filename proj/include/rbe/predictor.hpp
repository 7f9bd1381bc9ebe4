#pragma once

#include <optional>
#include <string>
#include <vector>

#include "rbe/linalg.hpp"
#include "rbe/rng.hpp"
#include "rbe/schedule.hpp"
#include "rbe/serial.hpp"
#include "rbe/tensor.hpp"

// Noise-predictor backends with an explicit, injectable h-space.
//
// A predictor exposes
//   eval(x_t, t)            baseline prediction
//   eval(x_t, t, delta_h)   delta_h added to the bottleneck before decoding
//   extract_h(x_t, t)       the bottleneck vector itself
// and is deterministic and immutable after construction, so eval may be
// called from many threads at once.

namespace rbe {

template <class M>
concept Predictor = requires(const M& m, const Image& x, int t, const Vec& dh) {
  { m.d_h() } -> std::convertible_to<int>;
  { m.image_shape() } -> std::convertible_to<Shape3>;
  { m.eval(x, t) } -> std::convertible_to<Image>;
  { m.eval(x, t, dh) } -> std::convertible_to<Image>;
  { m.extract_h(x, t) } -> std::convertible_to<Vec>;
};

// ---------------------------------------------------------------------
// Analytic backend: data distribution N(mu0 + W h, s2 I). The posterior
// mean predictor and its Jacobian are closed-form, which makes this the
// exact oracle for every finite-difference and projection test:
//
//   eval(x_t, t, h) = sqrt(1-ab) (x_t - sqrt(ab) (mu0 + W h)) / (ab s2 + 1 - ab)
//   d eval / d h    = -sqrt(1-ab) sqrt(ab) / (ab s2 + 1 - ab) * W
// ---------------------------------------------------------------------

class AnalyticGaussianModel {
 public:
  AnalyticGaussianModel(Image mu0, Mat w, double s2, const Schedule& schedule)
      : mu0_(std::move(mu0)), w_(std::move(w)), s2_(s2), alpha_bar_(schedule.alpha_bar) {
    require(s2_ > 0.0, "AnalyticGaussianModel: s2 must be positive");
    require(w_.rows == mu0_.shape.numel(), "AnalyticGaussianModel: W rows must equal C*H*W");
    check_finite(w_.v, "AnalyticGaussianModel: W");
    for (int j = 0; j < w_.cols; ++j) {
      double n = 0.0;
      for (int i = 0; i < w_.rows; ++i) n += w_.at(i, j) * w_.at(i, j);
      require(n > 0.0, "AnalyticGaussianModel: W column " + std::to_string(j) + " is zero");
    }
    h0_.assign(static_cast<size_t>(w_.cols), 0.0);
  }

  int d_h() const { return w_.cols; }
  Shape3 image_shape() const { return mu0_.shape; }
  int T() const { return static_cast<int>(alpha_bar_.size()) - 1; }

  // The conditioning vector is external state with default zero.
  void set_h(const Vec& h) {
    require(static_cast<int>(h.size()) == d_h(), "set_h: length != d_h");
    h0_ = h;
  }

  Image eval(const Image& x_t, int t) const { return eval_with_h(x_t, t, h0_); }

  Image eval(const Image& x_t, int t, const Vec& delta_h) const {
    require(static_cast<int>(delta_h.size()) == d_h(), "eval: delta_h length != d_h");
    Vec h = h0_;
    for (size_t i = 0; i < h.size(); ++i) h[i] += delta_h[i];
    return eval_with_h(x_t, t, h);
  }

  Image eval_with_h(const Image& x_t, int t, const Vec& h) const {
    require(x_t.shape == mu0_.shape, "eval: image shape mismatch");
    check_t(t);
    require(static_cast<int>(h.size()) == d_h(), "eval: h length != d_h");
    double ab = alpha_bar_[static_cast<size_t>(t)];
    double denom = ab * s2_ + 1.0 - ab;
    double coef = std::sqrt(1.0 - ab) / denom;
    double sqrt_ab = std::sqrt(ab);
    Vec wh = matvec(w_, h);
    Image r(x_t.shape);
    for (size_t i = 0; i < r.v.size(); ++i)
      r.v[i] = coef * (x_t.v[i] - sqrt_ab * (mu0_.v[i] + wh[i]));
    return r;
  }

  Vec extract_h(const Image& /*x_t*/, int /*t*/) const { return h0_; }

  // d eval / d h in closed form, shape [C*H*W, d_h].
  Mat analytic_jacobian(int t) const {
    check_t(t);
    double ab = alpha_bar_[static_cast<size_t>(t)];
    double denom = ab * s2_ + 1.0 - ab;
    double coef = -std::sqrt(1.0 - ab) * std::sqrt(ab) / denom;
    Mat j = w_;
    for (auto& x : j.v) x *= coef;
    return j;
  }

  const Image& mu0() const { return mu0_; }
  const Mat& w() const { return w_; }
  double s2() const { return s2_; }
  double alpha_bar(int t) const {
    check_t(t);
    return alpha_bar_[static_cast<size_t>(t)];
  }

 private:
  void check_t(int t) const {
    require(t >= 0 && t < static_cast<int>(alpha_bar_.size()),
            "eval: timestep " + std::to_string(t) + " outside schedule");
  }

  Image mu0_;
  Mat w_;
  double s2_;
  Vec h0_;
  std::vector<double> alpha_bar_;
};

// ---------------------------------------------------------------------
// Tiny bottlenecked conv net. Two stride-2 3x3 convs down, affine to h
// (dim d_h) where a sinusoidal projection of t/T is added, affine back up,
// two stride-2 3x3 transposed convs. SiLU activations, no skip
// connections, so h is a true bottleneck.
// ---------------------------------------------------------------------

class TinyUNetModel {
 public:
  Shape3 shape;           // image [C,H,W]; H and W divisible by 4
  int dh = 0;             // bottleneck width
  int c1 = 0, c2 = 0;     // encoder channel widths
  int steps = 50;         // schedule length T used for the t/T embedding

  std::vector<double> conv1_w, conv1_b;    // [c1,C,3,3], [c1]
  std::vector<double> conv2_w, conv2_b;    // [c2,c1,3,3], [c2]
  std::vector<double> enc_w, enc_b;        // [d_h, c2*H/4*W/4], [d_h]
  std::vector<double> temb_w;              // [d_h, 16]
  std::vector<double> dec_w, dec_b;        // [c2*H/4*W/4, d_h], [c2*H/4*W/4]
  std::vector<double> deconv1_w, deconv1_b;  // [c2,c1,3,3], [c1]
  std::vector<double> deconv2_w, deconv2_b;  // [c1,C,3,3], [C]

  int d_h() const { return dh; }
  Shape3 image_shape() const { return shape; }
  int flat2() const { return c2 * (shape.h / 4) * (shape.w / 4); }

  Image eval(const Image& x_t, int t) const { return decode(extract_h(x_t, t), t); }

  Image eval(const Image& x_t, int t, const Vec& delta_h) const {
    require(static_cast<int>(delta_h.size()) == dh, "eval: delta_h length != d_h");
    Vec h = extract_h(x_t, t);
    for (size_t i = 0; i < h.size(); ++i) h[i] += delta_h[i];
    return decode(h, t);
  }

  // Absolute replacement of the bottleneck vector.
  Image eval_with_h(const Image& x_t, int t, const Vec& h) const {
    require(x_t.shape == shape, "eval_with_h: image shape mismatch");
    require(static_cast<int>(h.size()) == dh, "eval_with_h: h length != d_h");
    return decode(h, t);
  }

  Vec extract_h(const Image& x_t, int t) const {
    require(x_t.shape == shape, "extract_h: image shape mismatch");
    int h2 = shape.h / 2, w2 = shape.w / 2;
    std::vector<double> a1 = conv_s2(x_t.v, shape.c, shape.h, shape.w, c1, conv1_w, conv1_b);
    silu_inplace(a1);
    std::vector<double> a2 = conv_s2(a1, c1, h2, w2, c2, conv2_w, conv2_b);
    silu_inplace(a2);
    Vec h(static_cast<size_t>(dh));
    int f2 = flat2();
    for (int d = 0; d < dh; ++d) {
      double s = enc_b[static_cast<size_t>(d)];
      const double* row = enc_w.data() + static_cast<size_t>(d) * f2;
      for (int i = 0; i < f2; ++i) s += row[i] * a2[static_cast<size_t>(i)];
      h[static_cast<size_t>(d)] = s;
    }
    // time conditioning enters at the bottleneck
    auto f = time_features(t);
    for (int d = 0; d < dh; ++d) {
      double s = 0.0;
      const double* row = temb_w.data() + static_cast<size_t>(d) * 16;
      for (int i = 0; i < 16; ++i) s += row[i] * f[static_cast<size_t>(i)];
      h[static_cast<size_t>(d)] += s;
    }
    return h;
  }

  std::vector<double> time_features(int t) const {
    std::vector<double> f(16);
    double tau = static_cast<double>(t) / static_cast<double>(steps);
    double freq = M_PI;
    for (int k = 0; k < 8; ++k) {
      f[static_cast<size_t>(2 * k)] = std::sin(freq * tau);
      f[static_cast<size_t>(2 * k + 1)] = std::cos(freq * tau);
      freq *= 2.0;
    }
    return f;
  }

 private:
  static void silu_inplace(std::vector<double>& v) {
    for (auto& x : v) x = x / (1.0 + std::exp(-x));
  }

  // 3x3 conv, stride 2, zero pad 1: [cin,hin,win] -> [cout,hin/2,win/2]
  static std::vector<double> conv_s2(const std::vector<double>& in, int cin, int hin, int win,
                                     int cout, const std::vector<double>& w,
                                     const std::vector<double>& b) {
    int hout = hin / 2, wout = win / 2;
    std::vector<double> out(static_cast<size_t>(cout) * hout * wout);
    for (int o = 0; o < cout; ++o)
      for (int y = 0; y < hout; ++y)
        for (int x = 0; x < wout; ++x) {
          double s = b[static_cast<size_t>(o)];
          for (int i = 0; i < cin; ++i)
            for (int ky = 0; ky < 3; ++ky) {
              int iy = 2 * y + ky - 1;
              if (iy < 0 || iy >= hin) continue;
              for (int kx = 0; kx < 3; ++kx) {
                int ix = 2 * x + kx - 1;
                if (ix < 0 || ix >= win) continue;
                s += in[(static_cast<size_t>(i) * hin + iy) * win + ix] *
                     w[((static_cast<size_t>(o) * cin + i) * 3 + ky) * 3 + kx];
              }
            }
          out[(static_cast<size_t>(o) * hout + y) * wout + x] = s;
        }
    return out;
  }

  // 3x3 transposed conv, stride 2, pad 1, output pad 1: doubles H and W
  static std::vector<double> deconv_s2(const std::vector<double>& in, int cin, int hin, int win,
                                       int cout, const std::vector<double>& w,
                                       const std::vector<double>& b) {
    int hout = 2 * hin, wout = 2 * win;
    std::vector<double> out(static_cast<size_t>(cout) * hout * wout);
    for (int o = 0; o < cout; ++o)
      for (int y = 0; y < hout; ++y)
        for (int x = 0; x < wout; ++x) out[(static_cast<size_t>(o) * hout + y) * wout + x] = b[static_cast<size_t>(o)];
    for (int i = 0; i < cin; ++i)
      for (int iy = 0; iy < hin; ++iy)
        for (int ix = 0; ix < win; ++ix) {
          double v = in[(static_cast<size_t>(i) * hin + iy) * win + ix];
          for (int o = 0; o < cout; ++o)
            for (int ky = 0; ky < 3; ++ky) {
              int oy = 2 * iy + ky - 1;
              if (oy < 0 || oy >= hout) continue;
              for (int kx = 0; kx < 3; ++kx) {
                int ox = 2 * ix + kx - 1;
                if (ox < 0 || ox >= wout) continue;
                out[(static_cast<size_t>(o) * hout + oy) * wout + ox] +=
                    v * w[((static_cast<size_t>(i) * cout + o) * 3 + ky) * 3 + kx];
              }
            }
        }
    return out;
  }

  Image decode(const Vec& h, int /*t*/) const {
    int h4 = shape.h / 4, w4 = shape.w / 4;
    int f2 = flat2();
    std::vector<double> z(static_cast<size_t>(f2));
    for (int i = 0; i < f2; ++i) {
      double s = dec_b[static_cast<size_t>(i)];
      const double* row = dec_w.data() + static_cast<size_t>(i) * dh;
      for (int d = 0; d < dh; ++d) s += row[d] * h[static_cast<size_t>(d)];
      z[static_cast<size_t>(i)] = s;
    }
    silu_inplace(z);
    std::vector<double> u1 = deconv_s2(z, c2, h4, w4, c1, deconv1_w, deconv1_b);
    silu_inplace(u1);
    std::vector<double> u2 = deconv_s2(u1, c1, shape.h / 2, shape.w / 2, shape.c, deconv2_w, deconv2_b);
    Image out(shape);
    out.v = std::move(u2);
    return out;
  }
};

/// Deterministic random initialization, weights ~ N(0, gain^2 * 2/fan_in).
inline TinyUNetModel init_random(uint64_t seed, int d_h, Shape3 image_shape,
                                 std::pair<int, int> channel_widths, int T = 50,
                                 double gain = 1.0) {
  require(d_h >= 1, "init_random: d_h must be >= 1");
  require(image_shape.c >= 1 && image_shape.h % 4 == 0 && image_shape.w % 4 == 0 &&
              image_shape.h >= 4 && image_shape.w >= 4,
          "init_random: H and W must be multiples of 4");
  require(channel_widths.first >= 1 && channel_widths.second >= 1,
          "init_random: channel widths must be >= 1");
  require(T >= 1, "init_random: T must be >= 1");

  TinyUNetModel m;
  m.shape = image_shape;
  m.dh = d_h;
  m.c1 = channel_widths.first;
  m.c2 = channel_widths.second;
  m.steps = T;

  Rng rng(seed, /*stream=*/4);
  auto fill = [&](std::vector<double>& v, size_t n, int fan_in) {
    v.resize(n);
    double scale = gain * std::sqrt(2.0 / static_cast<double>(fan_in));
    for (auto& x : v) x = scale * rng.next_gaussian();
  };
  auto zeros = [](std::vector<double>& v, size_t n) { v.assign(n, 0.0); };

  int C = image_shape.c;
  int f2 = m.flat2();
  fill(m.conv1_w, static_cast<size_t>(m.c1) * C * 9, C * 9);
  zeros(m.conv1_b, static_cast<size_t>(m.c1));
  fill(m.conv2_w, static_cast<size_t>(m.c2) * m.c1 * 9, m.c1 * 9);
  zeros(m.conv2_b, static_cast<size_t>(m.c2));
  fill(m.enc_w, static_cast<size_t>(d_h) * f2, f2);
  zeros(m.enc_b, static_cast<size_t>(d_h));
  fill(m.temb_w, static_cast<size_t>(d_h) * 16, 16);
  fill(m.dec_w, static_cast<size_t>(f2) * d_h, d_h);
  zeros(m.dec_b, static_cast<size_t>(f2));
  fill(m.deconv1_w, static_cast<size_t>(m.c2) * m.c1 * 9, m.c2 * 9);
  zeros(m.deconv1_b, static_cast<size_t>(m.c1));
  fill(m.deconv2_w, static_cast<size_t>(m.c1) * C * 9, m.c1 * 9);
  zeros(m.deconv2_b, static_cast<size_t>(C));
  return m;
}

// --- RBEW weights file --------------------------------------------------
// magic "RBEW", u32 version=1, u32 layer count, then per layer:
// u32 rank, u32 dims[rank], f64 LE values row-major; trailing CRC32.
// Layer 0 is a meta tensor [C,H,W,d_h,c1,c2,T]; layers 1..13 are the
// parameter tensors in declaration order.

namespace detail {

struct NamedTensor {
  const char* name;
  std::vector<uint32_t> dims;
  const std::vector<double>* data;
};

inline std::vector<NamedTensor> weight_layout(const TinyUNetModel& m,
                                              const std::vector<double>& meta) {
  uint32_t C = static_cast<uint32_t>(m.shape.c), c1 = static_cast<uint32_t>(m.c1),
           c2 = static_cast<uint32_t>(m.c2), dh = static_cast<uint32_t>(m.dh),
           f2 = static_cast<uint32_t>(m.flat2());
  return {
      {"meta", {7}, &meta},
      {"conv1.w", {c1, C, 3, 3}, &m.conv1_w},
      {"conv1.b", {c1}, &m.conv1_b},
      {"conv2.w", {c2, c1, 3, 3}, &m.conv2_w},
      {"conv2.b", {c2}, &m.conv2_b},
      {"enc.w", {dh, f2}, &m.enc_w},
      {"enc.b", {dh}, &m.enc_b},
      {"temb.w", {dh, 16}, &m.temb_w},
      {"dec.w", {f2, dh}, &m.dec_w},
      {"dec.b", {f2}, &m.dec_b},
      {"deconv1.w", {c2, c1, 3, 3}, &m.deconv1_w},
      {"deconv1.b", {c1}, &m.deconv1_b},
      {"deconv2.w", {c1, C, 3, 3}, &m.deconv2_w},
      {"deconv2.b", {C}, &m.deconv2_b},
  };
}

}  // namespace detail

inline void save_weights(const TinyUNetModel& m, const std::string& path) {
  std::vector<double> meta = {static_cast<double>(m.shape.c), static_cast<double>(m.shape.h),
                              static_cast<double>(m.shape.w), static_cast<double>(m.dh),
                              static_cast<double>(m.c1),      static_cast<double>(m.c2),
                              static_cast<double>(m.steps)};
  auto layers = detail::weight_layout(m, meta);
  ByteWriter wr;
  wr.magic("RBEW");
  wr.u32(1);  // version
  wr.u32(static_cast<uint32_t>(layers.size()));
  for (const auto& layer : layers) {
    wr.u32(static_cast<uint32_t>(layer.dims.size()));
    size_t numel = 1;
    for (uint32_t d : layer.dims) {
      wr.u32(d);
      numel *= d;
    }
    require(layer.data->size() == numel, std::string("save_weights: ") + layer.name + " size mismatch");
    wr.f64_span(*layer.data);
  }
  atomic_write_file(path, wr.finish());
}

inline TinyUNetModel load_weights(const std::string& path) {
  ByteReader rd(read_file_bytes(path), path);
  rd.expect_magic("RBEW");
  rd.check_crc();
  uint32_t version = rd.u32("version");
  if (version != 1) throw IoError(path + ": unsupported version " + std::to_string(version) + " (expected 1)");
  uint32_t count = rd.u32("layer count");
  if (count != 14)
    throw IoError(path + ": layer count " + std::to_string(count) + " (expected 14)");

  auto read_tensor = [&](const char* name, const std::vector<uint32_t>& want_dims) {
    uint32_t rank = rd.u32(std::string(name) + " rank");
    if (rank != want_dims.size())
      throw IoError(path + ": layer " + name + ": rank " + std::to_string(rank) + " (expected " +
                    std::to_string(want_dims.size()) + ")");
    size_t numel = 1;
    for (size_t i = 0; i < want_dims.size(); ++i) {
      uint32_t d = rd.u32(std::string(name) + " dims[" + std::to_string(i) + "]");
      if (d != want_dims[i])
        throw IoError(path + ": layer " + name + ": dim " + std::to_string(i) + " is " +
                      std::to_string(d) + " (expected " + std::to_string(want_dims[i]) + ")");
      numel *= d;
    }
    return rd.f64_span(numel, std::string(name) + " values");
  };

  // meta first; its values fix every later shape
  uint32_t meta_rank = rd.u32("meta rank");
  if (meta_rank != 1) throw IoError(path + ": layer meta: rank " + std::to_string(meta_rank) + " (expected 1)");
  uint32_t meta_len = rd.u32("meta dims[0]");
  if (meta_len != 7) throw IoError(path + ": layer meta: length " + std::to_string(meta_len) + " (expected 7)");
  auto meta = rd.f64_span(7, "meta values");
  TinyUNetModel m;
  m.shape = {static_cast<int>(meta[0]), static_cast<int>(meta[1]), static_cast<int>(meta[2])};
  m.dh = static_cast<int>(meta[3]);
  m.c1 = static_cast<int>(meta[4]);
  m.c2 = static_cast<int>(meta[5]);
  m.steps = static_cast<int>(meta[6]);
  if (m.shape.c < 1 || m.shape.h < 4 || m.shape.w < 4 || m.shape.h % 4 != 0 || m.shape.w % 4 != 0 ||
      m.dh < 1 || m.c1 < 1 || m.c2 < 1 || m.steps < 1)
    throw IoError(path + ": layer meta: invalid architecture values");

  std::vector<double> meta_copy(meta.begin(), meta.end());
  auto layers = detail::weight_layout(m, meta_copy);
  std::vector<std::vector<double>> loaded;
  for (size_t li = 1; li < layers.size(); ++li)
    loaded.push_back(read_tensor(layers[li].name, layers[li].dims));
  rd.expect_payload_end();

  size_t i = 0;
  m.conv1_w = std::move(loaded[i++]);
  m.conv1_b = std::move(loaded[i++]);
  m.conv2_w = std::move(loaded[i++]);
  m.conv2_b = std::move(loaded[i++]);
  m.enc_w = std::move(loaded[i++]);
  m.enc_b = std::move(loaded[i++]);
  m.temb_w = std::move(loaded[i++]);
  m.dec_w = std::move(loaded[i++]);
  m.dec_b = std::move(loaded[i++]);
  m.deconv1_w = std::move(loaded[i++]);
  m.deconv1_b = std::move(loaded[i++]);
  m.deconv2_w = std::move(loaded[i++]);
  m.deconv2_b = std::move(loaded[i++]);
  for (const auto& layer : detail::weight_layout(m, meta_copy))
    check_finite(*layer.data, path + ": layer " + layer.name);
  return m;
}

}  // namespace rbe
