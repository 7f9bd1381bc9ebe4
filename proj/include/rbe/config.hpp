#pragma once

#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "rbe/jacobian.hpp"
#include "rbe/pipeline.hpp"
#include "rbe/tensor.hpp"

// Flat key=value run configuration with dotted section prefixes, e.g.
//   backend = analytic
//   discovery.k = 3
// '#' starts a comment. Unknown keys are rejected so typos fail loudly.

namespace rbe {

struct RunConfig {
  std::string backend = "analytic";  // analytic | tinynet

  // analytic backend
  int analytic_d_h = 16;
  Shape3 analytic_image{1, 16, 16};
  double analytic_s2 = 1.0;
  uint64_t analytic_seed = 7;
  double analytic_mu_scale = 0.5;
  double analytic_w_scale = 0.3;
  double analytic_w_decay = 0.75;  // geometric column-scale decay of the conditioning map

  // tinynet backend
  std::string tinynet_weights;  // empty: deterministic random init
  int tinynet_d_h = 16;
  Shape3 tinynet_image{1, 16, 16};
  int tinynet_c1 = 8;
  int tinynet_c2 = 16;
  uint64_t tinynet_seed = 7;

  // schedule
  int schedule_T = 50;
  double beta_start = 1e-4;
  double beta_end = 0.02;
  double eta = 0.0;

  // mask
  std::string mask_type = "rect";  // rect | pgm
  int rect_top = 5, rect_left = 5, rect_height = 6, rect_width = 6;
  std::string mask_pgm;

  // input
  std::string input_x0 = "sample";  // "sample" or a PPM path
  double input_noise = 0.1;

  // discovery
  int k = 3;
  int k_u = 0;  // 0 = automatic
  std::string projection = "subspace";
  double fd_step = 1e-4;
  double tol = 1e-9;
  int max_iters = 10000;
  int t_ref = 0;  // 0 = window midpoint

  // edit
  std::vector<double> alphas = {-4.0, -2.0, 2.0, 4.0};
  int t_hi = 0, t_lo = 0;  // 0 = default window (0.8T, 0.4T]
  std::string injection = "asymmetric";
  int direction_index = 0;
  std::string directions_file;  // optional precomputed RBED file

  uint64_t seed = 42;
  int jobs = 1;
  std::string out_dir = "out";

  ProjectionMode projection_mode() const { return projection_mode_from_name(projection); }
  EditPlan::Injection injection_mode() const {
    if (injection == "asymmetric") return EditPlan::Injection::asymmetric;
    if (injection == "symmetric") return EditPlan::Injection::symmetric;
    throw ArgumentError("edit.injection must be asymmetric or symmetric, got \"" + injection + "\"");
  }

  void validate() const;
  std::string resolved_text() const;  // canonical form, excludes the output directory
};

namespace detail {

inline std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& key, const std::string& val) {
  try {
    size_t used = 0;
    double x = std::stod(val, &used);
    if (used != val.size()) throw std::invalid_argument("");
    return x;
  } catch (...) {
    throw ArgumentError("config: " + key + ": not a number: \"" + val + "\"");
  }
}

inline long parse_int(const std::string& key, const std::string& val) {
  try {
    size_t used = 0;
    long x = std::stol(val, &used);
    if (used != val.size()) throw std::invalid_argument("");
    return x;
  } catch (...) {
    throw ArgumentError("config: " + key + ": not an integer: \"" + val + "\"");
  }
}

inline uint64_t parse_u64(const std::string& key, const std::string& val) {
  try {
    size_t used = 0;
    unsigned long long x = std::stoull(val, &used);
    if (used != val.size()) throw std::invalid_argument("");
    return static_cast<uint64_t>(x);
  } catch (...) {
    throw ArgumentError("config: " + key + ": not a non-negative integer: \"" + val + "\"");
  }
}

inline Shape3 parse_shape(const std::string& key, const std::string& val) {
  Shape3 s;
  char x1 = 0, x2 = 0;
  std::istringstream is(val);
  if (!(is >> s.c >> x1 >> s.h >> x2 >> s.w) || x1 != 'x' || x2 != 'x' || !(is >> std::ws).eof())
    throw ArgumentError("config: " + key + ": expected CxHxW, got \"" + val + "\"");
  return s;
}

inline std::vector<double> parse_list(const std::string& key, const std::string& val) {
  std::vector<double> out;
  std::string item;
  std::istringstream is(val);
  while (std::getline(is, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(parse_double(key, item));
  }
  if (out.empty()) throw ArgumentError("config: " + key + ": empty list");
  return out;
}

}  // namespace detail

inline RunConfig parse_config(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ArgumentError("config: line " + std::to_string(lineno) + ": expected key=value");
    std::string key = detail::trim(line.substr(0, eq));
    std::string val = detail::trim(line.substr(eq + 1));
    if (kv.count(key)) throw ArgumentError("config: duplicate key \"" + key + "\"");
    kv[key] = val;
  }

  RunConfig c;
  std::set<std::string> seen;
  auto take = [&](const char* key) -> const std::string* {
    seen.insert(key);
    auto it = kv.find(key);
    return it == kv.end() ? nullptr : &it->second;
  };
  auto str = [&](const char* key, std::string& field) {
    if (auto* v = take(key)) field = *v;
  };
  auto num = [&](const char* key, double& field) {
    if (auto* v = take(key)) field = detail::parse_double(key, *v);
  };
  auto integer = [&](const char* key, int& field) {
    if (auto* v = take(key)) field = static_cast<int>(detail::parse_int(key, *v));
  };
  auto u64 = [&](const char* key, uint64_t& field) {
    if (auto* v = take(key)) field = detail::parse_u64(key, *v);
  };
  auto shape = [&](const char* key, Shape3& field) {
    if (auto* v = take(key)) field = detail::parse_shape(key, *v);
  };

  str("backend", c.backend);
  integer("analytic.d_h", c.analytic_d_h);
  shape("analytic.image", c.analytic_image);
  num("analytic.s2", c.analytic_s2);
  u64("analytic.seed", c.analytic_seed);
  num("analytic.mu_scale", c.analytic_mu_scale);
  num("analytic.w_scale", c.analytic_w_scale);
  num("analytic.w_decay", c.analytic_w_decay);
  str("tinynet.weights", c.tinynet_weights);
  integer("tinynet.d_h", c.tinynet_d_h);
  shape("tinynet.image", c.tinynet_image);
  integer("tinynet.c1", c.tinynet_c1);
  integer("tinynet.c2", c.tinynet_c2);
  u64("tinynet.seed", c.tinynet_seed);
  integer("schedule.T", c.schedule_T);
  num("schedule.beta_start", c.beta_start);
  num("schedule.beta_end", c.beta_end);
  num("schedule.eta", c.eta);
  str("mask.type", c.mask_type);
  if (auto* v = take("mask.rect")) {
    auto parts = detail::parse_list("mask.rect", *v);
    if (parts.size() != 4) throw ArgumentError("config: mask.rect: expected top,left,height,width");
    c.rect_top = static_cast<int>(parts[0]);
    c.rect_left = static_cast<int>(parts[1]);
    c.rect_height = static_cast<int>(parts[2]);
    c.rect_width = static_cast<int>(parts[3]);
  }
  str("mask.pgm", c.mask_pgm);
  str("input.x0", c.input_x0);
  num("input.noise", c.input_noise);
  integer("discovery.k", c.k);
  integer("discovery.k_u", c.k_u);
  str("discovery.projection", c.projection);
  num("discovery.fd_step", c.fd_step);
  num("discovery.tol", c.tol);
  integer("discovery.max_iters", c.max_iters);
  integer("discovery.t_ref", c.t_ref);
  if (auto* v = take("edit.alphas")) c.alphas = detail::parse_list("edit.alphas", *v);
  integer("edit.t_hi", c.t_hi);
  integer("edit.t_lo", c.t_lo);
  str("edit.injection", c.injection);
  integer("edit.direction", c.direction_index);
  str("edit.directions_file", c.directions_file);
  u64("seed", c.seed);
  integer("jobs", c.jobs);
  str("out", c.out_dir);

  for (const auto& [key, val] : kv)
    if (!seen.count(key)) throw ArgumentError("config: unknown key \"" + key + "\"");

  c.validate();
  return c;
}

inline void RunConfig::validate() const {
  require(backend == "analytic" || backend == "tinynet",
          "config: backend must be analytic or tinynet, got \"" + backend + "\"");
  require(analytic_d_h >= 1, "config: analytic.d_h must be >= 1");
  require(analytic_image.numel() > 0, "config: analytic.image must be positive");
  require(analytic_s2 > 0.0, "config: analytic.s2 must be positive");
  require(tinynet_d_h >= 1, "config: tinynet.d_h must be >= 1");
  require(schedule_T >= 1, "config: schedule.T must be >= 1");
  require(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0,
          "config: need 0 < schedule.beta_start <= schedule.beta_end < 1");
  require(eta >= 0.0 && eta <= 1.0, "config: schedule.eta must be in [0,1]");
  require(mask_type == "rect" || mask_type == "pgm", "config: mask.type must be rect or pgm");
  require(k >= 1, "config: discovery.k must be >= 1");
  require(k_u >= 0, "config: discovery.k_u must be >= 0");
  (void)projection_mode();
  (void)injection_mode();
  require(fd_step >= 1e-8 && fd_step <= 1e-2, "config: discovery.fd_step outside [1e-8, 1e-2]");
  require(tol > 0.0, "config: discovery.tol must be positive");
  require(max_iters >= 1, "config: discovery.max_iters must be >= 1");
  require(t_ref >= 0, "config: discovery.t_ref must be >= 0");
  require(t_hi >= 0 && t_lo >= 0, "config: edit window bounds must be >= 0");
  require(direction_index >= 0, "config: edit.direction must be >= 0");
  require(jobs >= 1, "config: jobs must be >= 1");
  require(input_noise >= 0.0, "config: input.noise must be >= 0");
}

inline std::string RunConfig::resolved_text() const {
  std::ostringstream os;
  os.precision(17);
  os << "backend = " << backend << "\n";
  if (backend == "analytic") {
    os << "analytic.d_h = " << analytic_d_h << "\n";
    os << "analytic.image = " << analytic_image.str() << "\n";
    os << "analytic.s2 = " << analytic_s2 << "\n";
    os << "analytic.seed = " << analytic_seed << "\n";
    os << "analytic.mu_scale = " << analytic_mu_scale << "\n";
    os << "analytic.w_scale = " << analytic_w_scale << "\n";
    os << "analytic.w_decay = " << analytic_w_decay << "\n";
  } else {
    os << "tinynet.weights = " << tinynet_weights << "\n";
    os << "tinynet.d_h = " << tinynet_d_h << "\n";
    os << "tinynet.image = " << tinynet_image.str() << "\n";
    os << "tinynet.c1 = " << tinynet_c1 << "\n";
    os << "tinynet.c2 = " << tinynet_c2 << "\n";
    os << "tinynet.seed = " << tinynet_seed << "\n";
  }
  os << "schedule.T = " << schedule_T << "\n";
  os << "schedule.beta_start = " << beta_start << "\n";
  os << "schedule.beta_end = " << beta_end << "\n";
  os << "schedule.eta = " << eta << "\n";
  os << "mask.type = " << mask_type << "\n";
  if (mask_type == "rect")
    os << "mask.rect = " << rect_top << "," << rect_left << "," << rect_height << "," << rect_width
       << "\n";
  else
    os << "mask.pgm = " << mask_pgm << "\n";
  os << "input.x0 = " << input_x0 << "\n";
  os << "input.noise = " << input_noise << "\n";
  os << "discovery.k = " << k << "\n";
  os << "discovery.k_u = " << k_u << "\n";
  os << "discovery.projection = " << projection << "\n";
  os << "discovery.fd_step = " << fd_step << "\n";
  os << "discovery.tol = " << tol << "\n";
  os << "discovery.max_iters = " << max_iters << "\n";
  os << "discovery.t_ref = " << t_ref << "\n";
  os << "edit.alphas = ";
  for (size_t i = 0; i < alphas.size(); ++i) os << (i ? "," : "") << alphas[i];
  os << "\n";
  os << "edit.t_hi = " << t_hi << "\n";
  os << "edit.t_lo = " << t_lo << "\n";
  os << "edit.injection = " << injection << "\n";
  os << "edit.direction = " << direction_index << "\n";
  if (!directions_file.empty()) os << "edit.directions_file = " << directions_file << "\n";
  os << "seed = " << seed << "\n";
  os << "jobs = " << jobs << "\n";
  return os.str();
}

}  // namespace rbe
