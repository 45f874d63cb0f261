#pragma once

// Run configuration shared by the command line driver: simulation design,
// pipeline tuning and Monte Carlo settings.

#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "flsem/io.hpp"
#include "flsem/pipeline.hpp"

namespace flsem {

struct AppConfig {
  SimConfig sim;
  PipelineConfig pipe;
  std::string kernel = "auto";  // auto: gaussian (1-D) or product:gaussian (2-D)
  double bandwidth = 0.003;
  bool full_grid = false;
  int reps = 30;
  int threads = 0;
  int n_test = 200;
  std::vector<std::string> warnings;

  KernelSpec kernel_for(int dim) const {
    std::string k = kernel;
    if (k == "auto") k = dim == 2 ? "product:gaussian" : "gaussian";
    KernelSpec ks = parse_kernel(k, bandwidth);
    require(ks.dim() == dim, "kernel '" + k + "' does not match a " + std::to_string(dim) + "-D grid");
    return ks;
  }

  void finalize() {
    if (full_grid) {
      sim.m1 = 100;
      sim.m2 = 150;
    }
    sim.validate();
    require(bandwidth > 0, "bandwidth must be positive");
    if (kernel != "auto") parse_kernel(kernel, bandwidth);
    require(pipe.jz >= 1, "jz must be >= 1");
    require(pipe.lambda_k > 0 || pipe.lambda_k_gcv, "lambda_k must be positive or gcv");
    require(pipe.lambda >= 0, "lambda must be nonnegative (0 selects the default)");
    require(pipe.dc_blocks >= 1, "dc_blocks must be >= 1");
    require(pipe.window_width > 0 && pipe.window_width <= 1, "window_width must be in (0, 1]");
    require(pipe.window_stride > 0 && pipe.window_stride <= pipe.window_width, "window_stride must be in (0, width]");
    require(pipe.level > 0 && pipe.level < 1, "level must be in (0, 1)");
    require(reps >= 1, "reps must be >= 1");
    require(n_test >= 1, "n_test must be >= 1");
    for (int J : pipe.jy_grid) require(J >= 0, "jy_grid entries must be >= 0");
  }
};

inline const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "design", "n", "p", "rho1", "rho2", "b", "m", "m1", "m2", "full_grid", "seed", "kernel", "bandwidth",
      "jz", "lambda_k", "jy", "jy_grid", "lambda", "screen", "k_y", "k_z", "split", "sigma2", "sigma2_fit",
      "dc_blocks", "window_width", "window_stride", "level", "reps", "threads", "n_test"};
  return keys;
}

inline bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw ValidationError("key '" + key + "': expected a boolean");
}

inline std::vector<int> parse_int_list(const std::string& v, const std::string& key) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok = trim(tok);
    size_t dots = tok.find("..");
    if (dots != std::string::npos) {
      long long a = parse_int(tok.substr(0, dots), key), b = parse_int(tok.substr(dots + 2), key);
      for (long long j = a; j <= b; ++j) out.push_back(static_cast<int>(j));
    } else {
      out.push_back(static_cast<int>(parse_int(tok, key)));
    }
  }
  require(!out.empty(), "key '" + key + "': empty list");
  return out;
}

inline void apply_key(AppConfig& c, const std::string& k, const std::string& v) {
  auto I = [&] { return parse_int(v, "key '" + k + "'"); };
  auto D = [&] { return parse_double(v, "key '" + k + "'"); };
  if (k == "design") c.sim.design = parse_design(v);
  else if (k == "n") c.sim.n = static_cast<int>(I());
  else if (k == "p") c.sim.p = static_cast<int>(I());
  else if (k == "rho1") c.sim.rho1 = D();
  else if (k == "rho2") c.sim.rho2 = D();
  else if (k == "b") c.sim.b = D();
  else if (k == "m") c.sim.m = static_cast<int>(I());
  else if (k == "m1") c.sim.m1 = static_cast<int>(I());
  else if (k == "m2") c.sim.m2 = static_cast<int>(I());
  else if (k == "full_grid") c.full_grid = parse_bool(v, k);
  else if (k == "seed") {
    long long s = I();
    require(s >= 0, "seed must be nonnegative");
    c.sim.seed = static_cast<uint64_t>(s);
  } else if (k == "kernel") c.kernel = v;
  else if (k == "bandwidth") c.bandwidth = D();
  else if (k == "jz") c.pipe.jz = static_cast<int>(I());
  else if (k == "lambda_k") {
    if (v == "gcv") c.pipe.lambda_k_gcv = true;
    else {
      c.pipe.lambda_k_gcv = false;
      c.pipe.lambda_k = D();
    }
  } else if (k == "jy") {
    if (v == "hbic") c.pipe.jy = 0;
    else c.pipe.jy = static_cast<int>(I());
  } else if (k == "jy_grid") c.pipe.jy_grid = parse_int_list(v, k);
  else if (k == "lambda") c.pipe.lambda = v == "default" ? 0.0 : D();
  else if (k == "screen") {
    if (v == "auto") c.pipe.screen = ScreenMode::Auto;
    else if (v == "on") c.pipe.screen = ScreenMode::On;
    else if (v == "off") c.pipe.screen = ScreenMode::Off;
    else throw ValidationError("key 'screen': expected auto|on|off");
  } else if (k == "k_y") c.pipe.k_y = static_cast<int>(I());
  else if (k == "k_z") c.pipe.k_z = static_cast<int>(I());
  else if (k == "split") c.pipe.split = parse_bool(v, k);
  else if (k == "sigma2") {
    if (v == "residual") c.pipe.sigma2 = Sigma2Mode::Residual;
    else if (v == "df") c.pipe.sigma2 = Sigma2Mode::DfCharged;
    else throw ValidationError("key 'sigma2': expected residual|df");
  } else if (k == "sigma2_fit") {
    if (v == "full") c.pipe.sigma2_null_fit = false;
    else if (v == "null") c.pipe.sigma2_null_fit = true;
    else throw ValidationError("key 'sigma2_fit': expected full|null");
  } else if (k == "dc_blocks") c.pipe.dc_blocks = static_cast<int>(I());
  else if (k == "window_width") c.pipe.window_width = D();
  else if (k == "window_stride") c.pipe.window_stride = D();
  else if (k == "level") c.pipe.level = D();
  else if (k == "reps") c.reps = static_cast<int>(I());
  else if (k == "threads") c.threads = static_cast<int>(I());
  else if (k == "n_test") c.n_test = static_cast<int>(I());
  else throw ValidationError("unknown config key '" + k + "'");
}

inline AppConfig parse_config_text(const std::string& text) {
  AppConfig c;
  auto kv = parse_kv(text, &c.warnings);
  for (const auto& [k, v] : kv) apply_key(c, k, v);
  c.finalize();
  return c;
}

inline AppConfig parse_config(const std::string& path) { return parse_config_text(read_text(path)); }

// Canonical echo of the effective configuration (sorted keys).
inline std::map<std::string, std::string> config_echo(const AppConfig& c) {
  std::map<std::string, std::string> e;
  auto list = [](const std::vector<int>& v) {
    std::string s;
    for (size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
  };
  e["design"] = to_string(c.sim.design);
  e["n"] = std::to_string(c.sim.n);
  e["p"] = std::to_string(c.sim.p);
  e["rho1"] = fmt(c.sim.rho1);
  e["rho2"] = fmt(c.sim.rho2);
  e["b"] = fmt(c.sim.b);
  e["m"] = std::to_string(c.sim.m);
  e["m1"] = std::to_string(c.sim.m1);
  e["m2"] = std::to_string(c.sim.m2);
  e["seed"] = std::to_string(c.sim.seed);
  e["kernel"] = c.kernel;
  e["bandwidth"] = fmt(c.bandwidth);
  e["jz"] = std::to_string(c.pipe.jz);
  e["lambda_k"] = c.pipe.lambda_k_gcv ? "gcv" : fmt(c.pipe.lambda_k);
  e["jy"] = c.pipe.jy > 0 ? std::to_string(c.pipe.jy) : "hbic";
  e["jy_grid"] = list(c.pipe.jy_grid);
  e["lambda"] = c.pipe.lambda > 0 ? fmt(c.pipe.lambda) : "default";
  e["screen"] = c.pipe.screen == ScreenMode::Auto ? "auto" : c.pipe.screen == ScreenMode::On ? "on" : "off";
  e["k_y"] = std::to_string(c.pipe.k_y);
  e["k_z"] = std::to_string(c.pipe.k_z);
  e["split"] = c.pipe.split ? "true" : "false";
  e["sigma2"] = c.pipe.sigma2 == Sigma2Mode::Residual ? "residual" : "df";
  e["sigma2_fit"] = c.pipe.sigma2_null_fit ? "null" : "full";
  e["dc_blocks"] = std::to_string(c.pipe.dc_blocks);
  e["window_width"] = fmt(c.pipe.window_width);
  e["window_stride"] = fmt(c.pipe.window_stride);
  e["level"] = fmt(c.pipe.level);
  e["reps"] = std::to_string(c.reps);
  e["n_test"] = std::to_string(c.n_test);
  return e;
}

inline std::string config_hash(const AppConfig& c) {
  std::string s;
  for (const auto& [k, v] : config_echo(c)) s += k + "=" + v + "\n";
  return hex64(fnv1a(s));
}

}  // namespace flsem
