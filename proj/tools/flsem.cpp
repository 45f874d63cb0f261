// flsem: command line driver.
//
//   simulate | screen | fit-exposure | fit-outcome | fit | test | check-iv | benchmark
//
// Matrices are headerless CSV (row = subject), vectors one value per line,
// index lists 1-based one per line, reports JSON. Exit codes: 0 ok,
// 2 validation error, 3 numerical failure, 4 guard exceeded.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "flsem/config.hpp"
#include "flsem/datagen.hpp"
#include "flsem/exposure.hpp"
#include "flsem/inference.hpp"
#include "flsem/io.hpp"
#include "flsem/ivcheck.hpp"
#include "flsem/metrics.hpp"
#include "flsem/outcome.hpp"
#include "flsem/pipeline.hpp"
#include "flsem/scale.hpp"
#include "flsem/screening.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace flsem;

namespace {

constexpr const char* kVersion = "0.1.0";

json vec_json(const Vector& v) {
  json a = json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

json idx_json(const std::vector<int>& v) {
  json a = json::array();
  for (int i : v) a.push_back(i + 1);
  return a;
}

void write_json(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write '" + path + "'");
  out << j.dump(2) << '\n';
}

std::string join(const std::string& dir, const std::string& f) { return (fs::path(dir) / f).string(); }

void ensure_dir(const std::string& d) {
  std::error_code ec;
  fs::create_directories(d, ec);
  if (ec) throw ValidationError("cannot create directory '" + d + "'");
}

// Options that map onto config keys; given flags override the config file.
struct Overrides {
  std::string config_path;
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> opts;
  std::vector<std::pair<std::string, CLI::Option*>> flags;

  void add(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
    opts[key] = app->add_option(flag, values[key], help);
  }
  void add_flag(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
    flags.emplace_back(key, app->add_flag(flag, help));
  }

  AppConfig resolve(AppConfig c = {}) {
    std::string text = config_path.empty() ? "" : read_text(config_path);
    auto kv = parse_kv(text, &c.warnings);
    for (auto& [k, o] : opts)
      if (o->count() > 0) kv[k] = values[k];
    for (auto& [k, o] : flags)
      if (o->count() > 0) kv[k] = "true";
    for (const auto& [k, v] : kv) apply_key(c, k, v);
    c.finalize();
    for (const auto& w : c.warnings) std::cerr << "warning: " << w << '\n';
    return c;
  }
};

void add_tuning(CLI::App* app, Overrides& ov) {
  app->add_option("--config", ov.config_path, "key=value configuration file");
  ov.add(app, "--kernel", "kernel", "brownian|ou|gaussian|product:<inner> (default: gaussian / product:gaussian)");
  ov.add(app, "--bandwidth", "bandwidth", "gaussian bandwidth (default 0.003)");
  ov.add(app, "--threads", "threads", "worker threads (fallback: FLSEM_THREADS)");
}

void add_exposure_opts(CLI::App* app, Overrides& ov) {
  ov.add(app, "--j,--jz", "jz", "exposure sparsity level J (default 10)");
  ov.add(app, "--lambda-k", "lambda_k", "exposure smoothing: real or 'gcv' (default 1e-6)");
  ov.add(app, "--dc-blocks", "dc_blocks", "subject blocks for divide-and-conquer (default 1)");
  ov.add(app, "--window-width", "window_width", "domain window width (default 1)");
  ov.add(app, "--window-stride", "window_stride", "domain window stride (default 1)");
}

void add_outcome_opts(CLI::App* app, Overrides& ov) {
  ov.add(app, "--jy", "jy", "outcome sparsity level or 'hbic' (default hbic)");
  ov.add(app, "--jy-grid", "jy_grid", "HBIC sparsity grid, e.g. 4..10 (default 4..10)");
  ov.add(app, "--lambda", "lambda", "outcome smoothing (default 1e-3 trace(Sigma)/m)");
  ov.add(app, "--sigma2", "sigma2", "residual|df (default residual)");
}

void add_sim_opts(CLI::App* app, Overrides& ov) {
  ov.add(app, "--design", "design", "example1_1d|example2_2d|example4_power (default example1_1d)");
  ov.add(app, "--n", "n", "subjects (default 200)");
  ov.add(app, "--p", "p", "scalar covariates (default 20)");
  ov.add(app, "--rho1", "rho1", "AR(1) correlation of X (default 0.3)");
  ov.add(app, "--rho2", "rho2", "endogeneity (default 0.7)");
  ov.add(app, "--b", "b", "signal scale for example4_power (default 0)");
  ov.add(app, "--m", "m", "1-D grid size (default 100)");
  ov.add(app, "--m1", "m1", "2-D grid rows (default 20)");
  ov.add(app, "--m2", "m2", "2-D grid columns (default 30)");
  ov.add(app, "--seed", "seed", "64-bit seed (default 1)");
  ov.add_flag(app, "--full-grid", "full_grid", "use the 100x150 grid for example2_2d");
}

KernelBasis basis_for(const AppConfig& c, const Grid& g) { return KernelBasis::build(c.kernel_for(g.dim()), g); }

json provenance(const AppConfig& c) {
  json j;
  j["seed"] = c.sim.seed;
  j["config_hash"] = config_hash(c);
  j["version"] = kVersion;
  return j;
}

json config_json(const AppConfig& c) {
  json j;
  for (const auto& [k, v] : config_echo(c)) j[k] = v;
  return j;
}

json exposure_json(const PipelineResult& r, const AppConfig& c) {
  json j = provenance(c);
  j["lambda_k"] = r.lambda_k;
  j["loss"] = r.exposure_loss;
  j["iterations"] = r.exposure_iterations;
  j["converged"] = r.exposure_converged;
  j["active_set"] = idx_json(r.exposure_active);
  j["divide_and_conquer"] = c.pipe.dc_blocks > 1 || c.pipe.window_width < 1.0;
  return j;
}

json outcome_json(const OutcomeFit& f, const AppConfig& c) {
  json j = provenance(c);
  j["active_set"] = idx_json(f.active_set);
  j["lambda"] = f.lambda;
  j["sigma2"] = f.sigma2;
  j["loss"] = f.loss;
  j["rss"] = f.rss;
  j["df_b"] = f.df_b;
  j["iterations"] = f.iterations;
  j["converged"] = f.converged;
  j["cycled"] = f.cycled;
  return j;
}

json test_json(const PipelineResult& r, const AppConfig& c) {
  json j = provenance(c);
  j["S_n"] = r.test.S_n;
  j["zeta"] = r.test.zeta;
  j["kappa"] = r.test.kappa;
  j["sigma2"] = r.test.sigma2;
  j["p_value"] = r.test.p_value;
  j["tr_Rn"] = r.test.tr_Rn;
  j["tr_Rn2"] = r.test.tr_Rn2;
  j["degenerate"] = r.test.degenerate;
  j["level"] = c.pipe.level;
  j["reject"] = r.reject;
  j["active_set"] = idx_json(r.outcome.active_set);
  return j;
}

Grid load_grid(const std::string& path) {
  Grid g = read_grid_csv(path);
  g.validate();
  return g;
}

void check_rows(Index a, Index b, const std::string& what) {
  require(a == b, "row count mismatch: " + what);
}

// ------------------------------------------------------------ subcommands

int cmd_simulate(Overrides& ov, const std::string& out) {
  AppConfig c = ov.resolve();
  FunctionalDataset ds = generate(c.sim);
  ensure_dir(out);
  write_matrix_csv(join(out, "X.csv"), ds.X);
  write_matrix_csv(join(out, "Z.csv"), ds.Z);
  write_vector_csv(join(out, "Y.csv"), ds.Y);
  write_matrix_csv(join(out, "grid.csv"), ds.grid.points);
  const Truth& t = ds.truth;
  json j = provenance(c);
  j["config"] = config_json(c);
  j["beta"] = vec_json(t.beta);
  j["B"] = vec_json(t.B);
  json C = json::array();
  for (int l = 0; l < 5; ++l) C.push_back(vec_json(t.C.row(l).transpose()));
  j["C"] = C;
  j["phi1"] = vec_json(t.phi1);
  j["phi2"] = vec_json(t.phi2);
  j["xi1"] = vec_json(t.xi1);
  j["xi2"] = vec_json(t.xi2);
  j["eps"] = vec_json(t.eps);
  j["delta"] = ds.grid.weight;
  j["sets"] = {{"confounders", idx_json(t.confounders)},
               {"instruments", idx_json(t.instruments)},
               {"precision", idx_json(t.precision)}};
  write_json(join(out, "truth.json"), j);
  return kExitOk;
}

int cmd_screen(const std::string& y, const std::string& x, const std::string& z, int ky, int kz,
               const std::string& out) {
  Matrix X = read_matrix_csv(x), Z = read_matrix_csv(z);
  Vector Y = read_vector_csv(y);
  check_rows(X.rows(), Z.rows(), "X vs Z");
  check_rows(X.rows(), Y.size(), "X vs Y");
  if (ky <= 0) ky = default_screen_size(X.rows(), X.cols());
  if (kz <= 0) kz = default_screen_size(X.rows(), X.cols());
  require(ky <= X.cols() && kz <= X.cols(), "screening sizes must not exceed p");
  auto idx = union_screen(sis_rank(Y, X, ky), dcor_screen_functional(Z, X, kz));
  if (out.empty()) {
    for (int i : idx) std::cout << (i + 1) << '\n';
  } else {
    write_index_csv(out, idx);
  }
  return kExitOk;
}

int cmd_fit_exposure(Overrides& ov, const std::string& x, const std::string& z, const std::string& grid,
                     const std::string& out) {
  AppConfig c = ov.resolve();
  Matrix X = read_matrix_csv(x), Z = read_matrix_csv(z);
  Grid g = load_grid(grid);
  check_rows(X.rows(), Z.rows(), "X vs Z");
  require(Z.cols() == g.size(), "Z columns must equal the number of grid points");
  KernelBasis kb = basis_for(c, g);
  ensure_dir(out);
  ExposureOptions eo;
  eo.J = c.pipe.jz;
  eo.lambda_k = c.pipe.lambda_k;
  eo.gcv = c.pipe.lambda_k_gcv;
  require(eo.J <= X.cols(), "J must not exceed p");
  PipelineResult r;
  if (c.pipe.dc_blocks > 1 || c.pipe.window_width < 1.0) {
    auto d = dc_exposure_fit(X, Z, kb, eo, make_partition(X.rows(), c.pipe.dc_blocks),
                             make_windows(g, c.pipe.window_width, c.pipe.window_stride));
    r.exposure_values = d.values;
    r.exposure_active = d.active_set;
    r.lambda_k = d.lambdas.front();
  } else {
    ExposureFit f = fgsdar_fit(X, Z, kb, eo);
    r.exposure_values = f.values;
    r.exposure_coef = f.coef;
    r.exposure_active = f.active_set;
    r.lambda_k = f.lambda_k;
    r.exposure_loss = f.loss;
    r.exposure_iterations = f.iterations;
    r.exposure_converged = f.converged;
    write_matrix_csv(join(out, "coef.csv"), f.coef);
  }
  write_matrix_csv(join(out, "values.csv"), r.exposure_values);
  write_index_csv(join(out, "active.csv"), r.exposure_active);
  write_matrix_csv(join(out, "zhat.csv"), X * r.exposure_values);
  write_json(join(out, "fit.json"), exposure_json(r, c));
  return kExitOk;
}

std::vector<Index> outcome_rows(Index n, bool split) {
  std::vector<Index> r = all_rows(n);
  if (split) r.assign(r.begin() + n / 2, r.end());
  return r;
}

int cmd_fit_outcome(Overrides& ov, const std::string& y, const std::string& x, const std::string& zhat,
                    const std::string& grid, const std::string& baseline_z, bool split, const std::string& out) {
  AppConfig c = ov.resolve();
  Matrix X = read_matrix_csv(x);
  Vector Y = read_vector_csv(y);
  require(!zhat.empty() || !baseline_z.empty(), "need --zhat or --baseline-z");
  Matrix Zh = read_matrix_csv(baseline_z.empty() ? zhat : baseline_z);
  Grid g = load_grid(grid);
  check_rows(X.rows(), Y.size(), "X vs Y");
  check_rows(X.rows(), Zh.rows(), "X vs Zhat");
  require(Zh.cols() == g.size(), "Zhat columns must equal the number of grid points");
  KernelBasis kb = basis_for(c, g);
  auto rows = outcome_rows(X.rows(), split);
  PipelineConfig pc = c.pipe;
  pc.run_test = false;
  PipelineResult r;
  run_outcome_stage(take_rows(Y, rows), take_rows(X, rows), take_rows(Zh, rows), kb, pc, r);
  ensure_dir(out);
  write_vector_csv(join(out, "beta.csv"), r.outcome.beta);
  write_vector_csv(join(out, "b_on_grid.csv"), r.outcome.B);
  write_vector_csv(join(out, "alpha.csv"), r.outcome.alpha);
  write_index_csv(join(out, "active.csv"), r.outcome.active_set);
  json j = outcome_json(r.outcome, c);
  j["baseline"] = !baseline_z.empty();
  j["split"] = split;
  write_json(join(out, "fit.json"), j);
  return kExitOk;
}

int cmd_fit(Overrides& ov, const std::string& dir, const std::string& x, const std::string& z,
            const std::string& y, const std::string& grid, const std::string& out) {
  AppConfig c = ov.resolve();
  auto pick = [&](const std::string& given, const std::string& name) {
    if (!given.empty()) return given;
    require(!dir.empty(), "need --data or --" + name.substr(0, name.find('.')));
    return join(dir, name);
  };
  Matrix X = read_matrix_csv(pick(x, "X.csv"));
  Matrix Z = read_matrix_csv(pick(z, "Z.csv"));
  Vector Y = read_vector_csv(pick(y, "Y.csv"));
  Grid g = load_grid(pick(grid, "grid.csv"));
  check_rows(X.rows(), Z.rows(), "X vs Z");
  check_rows(X.rows(), Y.size(), "X vs Y");
  require(Z.cols() == g.size(), "Z columns must equal the number of grid points");
  KernelBasis kb = basis_for(c, g);

  PipelineResult r;
  std::string stage = "setup";
  try {
    r = run_pipeline(X, Z, Y, kb, c.pipe, &stage);
  } catch (const Error& e) {
    throw Error("stage " + stage + ": " + e.what(), e.code());
  }
  ensure_dir(out);
  std::vector<std::string> outputs;
  auto rec = [&](const std::string& f) {
    outputs.push_back(f);
    return join(out, f);
  };
  write_index_csv(rec("screened.csv"), r.screened);
  write_matrix_csv(join(out, "exposure_values.csv"), r.exposure_values);
  if (r.exposure_coef.size()) write_matrix_csv(join(out, "exposure_coef.csv"), r.exposure_coef);
  write_index_csv(join(out, "exposure_active.csv"), r.exposure_active);
  write_json(rec("exposure.json"), exposure_json(r, c));
  write_matrix_csv(rec("zhat.csv"), r.zhat);
  write_vector_csv(join(out, "beta.csv"), r.outcome.beta);
  write_vector_csv(join(out, "b_on_grid.csv"), r.outcome.B);
  write_json(rec("outcome.json"), outcome_json(r.outcome, c));
  write_json(rec("test.json"), test_json(r, c));
  json m = provenance(c);
  m["config"] = config_json(c);
  m["stages"] = outputs;
  m["files"] = {"screened.csv", "exposure_values.csv", "exposure_active.csv", "exposure.json", "zhat.csv",
                "beta.csv", "b_on_grid.csv", "outcome.json", "test.json"};
  if (r.exposure_coef.size()) m["files"].push_back("exposure_coef.csv");
  m["screened"] = r.screened.size() != static_cast<size_t>(X.cols());
  m["split"] = c.pipe.split;
  write_json(join(out, "manifest.json"), m);
  return kExitOk;
}

int cmd_test(Overrides& ov, const std::string& y, const std::string& x, const std::string& zhat,
             const std::string& grid, const std::string& observed_z, bool split, const std::string& out) {
  AppConfig c = ov.resolve();
  Matrix X = read_matrix_csv(x);
  Vector Y = read_vector_csv(y);
  require(!zhat.empty() || !observed_z.empty(), "need --zhat or --observed-z");
  Matrix Zh = read_matrix_csv(observed_z.empty() ? zhat : observed_z);
  Grid g = load_grid(grid);
  check_rows(X.rows(), Y.size(), "X vs Y");
  check_rows(X.rows(), Zh.rows(), "X vs Zhat");
  require(Zh.cols() == g.size(), "Zhat columns must equal the number of grid points");
  KernelBasis kb = basis_for(c, g);
  auto rows = outcome_rows(X.rows(), split);
  PipelineConfig pc = c.pipe;
  pc.run_test = true;
  PipelineResult r;
  run_outcome_stage(take_rows(Y, rows), take_rows(X, rows), take_rows(Zh, rows), kb, pc, r);
  json j = test_json(r, c);
  j["observed_z"] = !observed_z.empty();
  if (out.empty()) std::cout << j.dump(2) << '\n';
  else write_json(out, j);
  return kExitOk;
}

int cmd_check_iv(const std::string& gamma, const std::string& loadings, int U, double tol, const std::string& out) {
  IvProblem prob;
  prob.gamma = read_vector_csv(gamma);
  prob.cmat = read_matrix_csv(loadings);
  if (prob.cmat.rows() != prob.gamma.size() && prob.cmat.cols() == prob.gamma.size())
    prob.cmat.transposeInPlace();
  prob.U = U;
  prob.rank_tol = tol;
  IvReport rep = check_identifiability(prob);
  json j;
  j["identifiable"] = rep.identifiable;
  j["reason"] = rep.reason;
  j["L"] = prob.L();
  j["R"] = prob.R();
  j["U"] = prob.U;
  j["corollary_max_invalid"] = prob.L() >= prob.R() ? corollary_max_invalid(static_cast<int>(prob.L()),
                                                                             static_cast<int>(prob.R()))
                                                    : 0;
  if (rep.identifiable) {
    j["b"] = vec_json(rep.b);
    j["beta"] = vec_json(rep.beta);
  }
  json subs = json::array();
  for (const auto& s : rep.consistent_subsets) subs.push_back({{"rows", idx_json(s.rows)}, {"b", vec_json(s.b)}});
  j["consistent_subsets"] = subs;
  if (out.empty()) std::cout << j.dump(2) << '\n';
  else write_json(out, j);
  return kExitOk;
}

void emit_table(std::ostream& os, const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
  for (size_t i = 0; i < header.size(); ++i) os << (i ? "," : "") << header[i];
  os << '\n';
  for (const auto& r : rows) {
    for (size_t i = 0; i < r.size(); ++i) os << (i ? "," : "") << r[i];
    os << '\n';
  }
}

int cmd_benchmark(Overrides& ov, int table, const std::string& b_list, const std::string& out) {
  AppConfig base;
  base.pipe = table_preset();
  AppConfig c = ov.resolve(base);
  int threads = resolve_threads(c.threads);
  auto t0 = std::chrono::steady_clock::now();
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  auto col = [](const std::vector<Record>& recs, const std::string& k) {
    Aggregate a = aggregate(recs, k);
    return std::vector<std::string>{fmt(a.mean), fmt(a.sd)};
  };
  auto push = [&](std::vector<std::string>& row, const std::vector<Record>& recs, const std::string& k,
                  const std::string& name) {
    header.push_back(name + "_mean");
    header.push_back(name + "_sd");
    auto v = col(recs, k);
    row.insert(row.end(), v.begin(), v.end());
  };

  if (table == 1 || table == 2) {
    require(c.sim.design == Design::Example1, "tables 1 and 2 use design example1_1d");
    KernelBasis kb = KernelBasis::build(c.kernel_for(1), Grid::uniform(c.sim.m));
    auto recs = run_replicates(c.reps, threads, [&](int r) {
      SimConfig s = c.sim;
      s.seed = c.sim.seed + static_cast<uint64_t>(r);
      return estimation_replicate(s, kb, c.pipe, c.n_test, table == 1, false);
    });
    std::vector<std::string> row{fmt(c.sim.rho1), fmt(c.sim.rho2), std::to_string(c.reps)};
    header = {"rho1", "rho2", "reps"};
    if (table == 1) {
      push(row, recs, "mse_beta", "flsem_mse_beta");
      push(row, recs, "mse_B", "flsem_mse_B");
      push(row, recs, "fz_y", "flsem_fz_y");
      push(row, recs, "fn_y", "flsem_fn_y");
      push(row, recs, "pmse_y", "flsem_pmse_y");
      push(row, recs, "pflm_mse_beta", "pflm_mse_beta");
      push(row, recs, "pflm_mse_B", "pflm_mse_B");
      push(row, recs, "pflm_fz_y", "pflm_fz_y");
      push(row, recs, "pflm_fn_y", "pflm_fn_y");
      push(row, recs, "pflm_pmse_y", "pflm_pmse_y");
    } else {
      for (int l = 1; l <= 5; ++l) push(row, recs, "mse_C" + std::to_string(l), "mse_C" + std::to_string(l));
      push(row, recs, "pmse_z", "pmse_z");
      push(row, recs, "fz_z", "fz_z");
      push(row, recs, "fn_z", "fn_z");
    }
    rows.push_back(row);
  } else if (table == 3) {
    SimConfig sim = c.sim;
    sim.design = Design::Example2;
    sim.validate();
    Grid g = Grid::uniform2d(sim.m1, sim.m2);
    KernelBasis kb = KernelBasis::build(c.kernel_for(2), g);
    PipelineConfig full = c.pipe, dc = c.pipe;
    full.dc_blocks = 1;
    full.window_width = full.window_stride = 1.0;
    if (dc.dc_blocks == 1 && dc.window_width >= 1.0) {
      dc.dc_blocks = 2;
      dc.window_width = 2.0 / 3.0;
      dc.window_stride = 1.0 / 3.0;
    }
    auto recs = run_replicates(c.reps, threads, [&](int r) {
      SimConfig s = sim;
      s.seed = sim.seed + static_cast<uint64_t>(r);
      return dc_replicate(s, kb, full, dc, c.n_test);
    });
    std::vector<std::string> row{std::to_string(sim.n), std::to_string(sim.m1) + "x" + std::to_string(sim.m2),
                                 std::to_string(c.reps)};
    header = {"n", "grid", "reps"};
    for (const char* pre : {"full_", "dc_"})
      for (const char* k : {"mse_beta", "mse_B", "pmse_y", "pmse_z", "fz_z"})
        push(row, recs, std::string(pre) + k, std::string(pre) + k);
    rows.push_back(row);
  } else if (table == 4) {
    SimConfig sim = c.sim;
    sim.design = Design::Example4;
    KernelBasis kb = KernelBasis::build(c.kernel_for(1), Grid::uniform(sim.m));
    std::vector<double> bs;
    {
      std::stringstream ss(b_list);
      std::string tok;
      while (std::getline(ss, tok, ',')) bs.push_back(parse_double(tok, "--b-list"));
    }
    header = {"b", "rho2", "reps", "reject_rate", "naive_reject_rate", "mean_S_sigma2", "mean_tr_Rn"};
    for (double b : bs) {
      SimConfig s0 = sim;
      s0.b = b;
      s0.validate();
      auto recs = run_replicates(c.reps, threads, [&](int r) {
        SimConfig s = s0;
        s.seed = s0.seed + static_cast<uint64_t>(r);
        return testing_replicate(s, kb, c.pipe, true);
      });
      rows.push_back({fmt(b), fmt(sim.rho2), std::to_string(c.reps), fmt(aggregate(recs, "reject").mean),
                      fmt(aggregate(recs, "naive_reject").mean), fmt(aggregate(recs, "S_sigma2").mean),
                      fmt(aggregate(recs, "tr_Rn").mean)});
    }
  } else {
    throw ValidationError("--table must be 1, 2, 3 or 4");
  }
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (out.empty()) {
    emit_table(std::cout, header, rows);
  } else {
    std::ofstream os(out);
    if (!os) throw ValidationError("cannot write '" + out + "'");
    emit_table(os, header, rows);
    json j = provenance(c);
    j["config"] = config_json(c);
    j["table"] = table;
    j["seconds"] = secs;
    j["threads"] = threads;
    write_json(out + ".json", j);
  }
  std::cerr << "benchmark table " << table << ": " << c.reps << " replicates in " << secs << " s\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Causal inference with an endogenous functional exposure: simulation, fitting, testing"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  // simulate
  Overrides ov_sim;
  std::string sim_out;
  auto* sim = app.add_subcommand("simulate", "generate a simulation dataset");
  add_tuning(sim, ov_sim);
  add_sim_opts(sim, ov_sim);
  sim->add_option("--out,-o", sim_out, "output directory")->required();

  // screen
  std::string sc_y, sc_x, sc_z, sc_out;
  int sc_ky = 0, sc_kz = 0;
  auto* scr = app.add_subcommand("screen", "marginal screening (correlation + distance correlation)");
  scr->add_option("--y", sc_y, "Y.csv")->required();
  scr->add_option("--x", sc_x, "X.csv")->required();
  scr->add_option("--z", sc_z, "Z.csv")->required();
  scr->add_option("--k-y", sc_ky, "outcome channel size (default floor(n/log n))");
  scr->add_option("--k-z", sc_kz, "exposure channel size (default floor(n/log n))");
  scr->add_option("--out,-o", sc_out, "output CSV of 1-based indices (default stdout)");

  // fit-exposure
  Overrides ov_fe;
  std::string fe_x, fe_z, fe_grid, fe_out;
  auto* fe = app.add_subcommand("fit-exposure", "fit the exposure model");
  add_tuning(fe, ov_fe);
  add_exposure_opts(fe, ov_fe);
  fe->add_option("--x", fe_x, "X.csv")->required();
  fe->add_option("--z", fe_z, "Z.csv")->required();
  fe->add_option("--grid", fe_grid, "grid.csv")->required();
  fe->add_option("--out,-o", fe_out, "output directory")->required();

  // fit-outcome
  Overrides ov_fo;
  std::string fo_y, fo_x, fo_zhat, fo_grid, fo_base, fo_out;
  bool fo_split = false;
  auto* fo = app.add_subcommand("fit-outcome", "fit the outcome model on Zhat (or observed Z)");
  add_tuning(fo, ov_fo);
  add_outcome_opts(fo, ov_fo);
  fo->add_option("--y", fo_y, "Y.csv")->required();
  fo->add_option("--x", fo_x, "X.csv")->required();
  fo->add_option("--zhat", fo_zhat, "zhat.csv");
  fo->add_option("--grid", fo_grid, "grid.csv")->required();
  fo->add_option("--baseline-z", fo_base, "observed Z.csv: fit the endogeneity-ignoring baseline");
  fo->add_flag("--split", fo_split, "use the second half of the subjects");
  fo->add_option("--out,-o", fo_out, "output directory")->required();

  // fit
  Overrides ov_fit;
  std::string fit_dir, fit_x, fit_z, fit_y, fit_grid, fit_out;
  auto* fit = app.add_subcommand("fit", "screen, fit exposure, fit outcome and test");
  add_tuning(fit, ov_fit);
  add_exposure_opts(fit, ov_fit);
  add_outcome_opts(fit, ov_fit);
  ov_fit.add(fit, "--screen", "screen", "auto|on|off (default auto: on when p > n)");
  ov_fit.add(fit, "--k-y", "k_y", "outcome screening size");
  ov_fit.add(fit, "--k-z", "k_z", "exposure screening size");
  ov_fit.add(fit, "--level", "level", "test level (default 0.05)");
  ov_fit.add(fit, "--sigma2-fit", "sigma2_fit", "full|null residual variance for the test");
  ov_fit.add_flag(fit, "--split", "split", "exposure on the first half, outcome and test on the second");
  fit->add_option("--data", fit_dir, "directory holding X.csv, Z.csv, Y.csv, grid.csv");
  fit->add_option("--x", fit_x, "X.csv");
  fit->add_option("--z", fit_z, "Z.csv");
  fit->add_option("--y", fit_y, "Y.csv");
  fit->add_option("--grid", fit_grid, "grid.csv");
  fit->add_option("--out,-o", fit_out, "output directory")->required();

  // test
  Overrides ov_t;
  std::string t_y, t_x, t_zhat, t_grid, t_obs, t_out;
  bool t_split = false;
  auto* tst = app.add_subcommand("test", "nullity test for the functional effect");
  add_tuning(tst, ov_t);
  add_outcome_opts(tst, ov_t);
  ov_t.add(tst, "--level", "level", "test level (default 0.05)");
  ov_t.add(tst, "--sigma2-fit", "sigma2_fit", "full|null residual variance");
  tst->add_option("--y", t_y, "Y.csv")->required();
  tst->add_option("--x", t_x, "X.csv")->required();
  tst->add_option("--zhat", t_zhat, "zhat.csv");
  tst->add_option("--grid", t_grid, "grid.csv")->required();
  tst->add_option("--observed-z", t_obs, "observed Z.csv in place of Zhat");
  tst->add_flag("--split", t_split, "use the second half of the subjects");
  tst->add_option("--out,-o", t_out, "JSON report path (default stdout)");

  // check-iv
  std::string iv_g, iv_c, iv_out;
  int iv_u = 1;
  double iv_tol = 1e-8;
  auto* iv = app.add_subcommand("check-iv", "identifiability under invalid instruments");
  iv->add_option("--gamma", iv_g, "reduced-form vector CSV (L values)")->required();
  iv->add_option("--loadings", iv_c, "L x R loading matrix CSV")->required();
  iv->add_option("--u", iv_u, "invalidity budget U")->required();
  iv->add_option("--rank-tol", iv_tol, "rank / consistency tolerance (default 1e-8)");
  iv->add_option("--out,-o", iv_out, "JSON report path (default stdout)");

  // benchmark
  Overrides ov_b;
  int b_table = 1;
  std::string b_list = "0,0.04,0.08,0.12,0.16,0.2", b_out;
  auto* bm = app.add_subcommand("benchmark", "Monte Carlo tables (1: outcome, 2: exposure, 3: divide-and-conquer, 4: test)");
  add_tuning(bm, ov_b);
  add_sim_opts(bm, ov_b);
  add_exposure_opts(bm, ov_b);
  add_outcome_opts(bm, ov_b);
  bm->add_option("--table", b_table, "1, 2, 3 or 4")->required();
  ov_b.add(bm, "--reps", "reps", "replicates (default 30)");
  ov_b.add(bm, "--n-test", "n_test", "test-set size (default 200)");
  ov_b.add(bm, "--level", "level", "test level (default 0.05)");
  bm->add_option("--b-list", b_list, "signal scales for table 4");
  bm->add_option("--out,-o", b_out, "output CSV (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitValidation;
  }

  try {
    if (*sim) return cmd_simulate(ov_sim, sim_out);
    if (*scr) return cmd_screen(sc_y, sc_x, sc_z, sc_ky, sc_kz, sc_out);
    if (*fe) return cmd_fit_exposure(ov_fe, fe_x, fe_z, fe_grid, fe_out);
    if (*fo) return cmd_fit_outcome(ov_fo, fo_y, fo_x, fo_zhat, fo_grid, fo_base, fo_split, fo_out);
    if (*fit) return cmd_fit(ov_fit, fit_dir, fit_x, fit_z, fit_y, fit_grid, fit_out);
    if (*tst) return cmd_test(ov_t, t_y, t_x, t_zhat, t_grid, t_obs, t_split, t_out);
    if (*iv) return cmd_check_iv(iv_g, iv_c, iv_u, iv_tol, iv_out);
    if (*bm) return cmd_benchmark(ov_b, b_table, b_list, b_out);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumerical;
  }
  return kExitOk;
}
