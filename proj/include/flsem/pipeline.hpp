#pragma once

// Screening -> exposure fit -> Zhat -> outcome fit -> nullity test, plus the
// Monte Carlo harness used by `benchmark` and the acceptance runs.

#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <functional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "flsem/datagen.hpp"
#include "flsem/exposure.hpp"
#include "flsem/inference.hpp"
#include "flsem/metrics.hpp"
#include "flsem/outcome.hpp"
#include "flsem/scale.hpp"
#include "flsem/screening.hpp"

namespace flsem {

enum class ScreenMode { Auto, On, Off };

struct PipelineConfig {
  KernelSpec kernel = KernelSpec::gaussian(0.003);
  int jz = 10;
  double lambda_k = 1e-6;
  bool lambda_k_gcv = false;
  int jy = 0;                                   // 0: choose by HBIC over jy_grid
  std::vector<int> jy_grid{4, 5, 6, 7, 8, 9, 10};
  double lambda = 0;                            // 0: 1e-3 * trace(Sigma) / m
  ScreenMode screen = ScreenMode::Auto;
  int k_y = 0, k_z = 0;                         // 0: floor(n / log n)
  bool split = false;
  Sigma2Mode sigma2 = Sigma2Mode::Residual;
  bool sigma2_null_fit = false;
  int dc_blocks = 1;
  double window_width = 1.0, window_stride = 1.0;
  double level = 0.05;
  bool run_test = true;
};

struct PipelineResult {
  std::vector<int> screened;       // columns passed to the fits (full indexing)
  std::vector<int> exposure_active;
  Matrix exposure_values;          // p x m, coefficient functions on the grid
  Matrix exposure_coef;            // p x m representer coefficients (empty for D&C)
  double lambda_k = 0;
  int exposure_iterations = 0;
  bool exposure_converged = true;
  double exposure_loss = 0;
  Matrix zhat;                     // rows of the outcome-stage subjects
  std::vector<Index> outcome_rows; // subjects used by the outcome stage
  OutcomeFit outcome;              // beta in full indexing
  int jy = 0;
  bool tested = false;
  TestResult test;
  bool reject = false;
};

inline std::vector<Index> all_rows(Index n) {
  std::vector<Index> r(static_cast<size_t>(n));
  for (Index i = 0; i < n; ++i) r[static_cast<size_t>(i)] = i;
  return r;
}

// Residual variance of Y on X_A alone.
inline double null_sigma2(const Vector& Y, const Matrix& X, const std::vector<int>& A) {
  Projector P(X, A);
  double dof = static_cast<double>(Y.size()) - static_cast<double>(A.size());
  require(dof > 0, "no residual degrees of freedom");
  return P.apply(Y).squaredNorm() / dof;
}

inline double resolved_lambda(const PipelineConfig& cfg, const KernelBasis& kb) {
  return cfg.lambda > 0 ? cfg.lambda : default_outcome_lambda(kb);
}

// Outcome stage + test on the given exposure values.
inline void run_outcome_stage(const Vector& Y, const Matrix& X, const Matrix& Zhat, const KernelBasis& kb,
                              const PipelineConfig& cfg, PipelineResult& res) {
  OutcomeOptions oo;
  oo.lambda = resolved_lambda(cfg, kb);
  oo.sigma2 = cfg.sigma2;
  std::vector<int> grid;
  if (cfg.jy > 0) oo.J = std::min<int>(cfg.jy, static_cast<int>(X.cols()));
  else
    for (int J : cfg.jy_grid)
      if (J <= X.cols() && J < X.rows()) grid.push_back(J);
  if (cfg.jy <= 0) require(!grid.empty(), "no feasible J_y in the sparsity grid");
  PartitionPlan part = make_partition(X.rows(), cfg.dc_blocks);
  res.outcome = dc_outcome_fit(Y, X, Zhat, kb, oo, cfg.jy > 0 ? std::vector<int>{} : grid, part);
  res.jy = static_cast<int>(res.outcome.active_set.size());
  if (cfg.run_test) {
    double s2 = cfg.sigma2_null_fit ? null_sigma2(Y, X, res.outcome.active_set) : res.outcome.sigma2;
    res.tested = true;
    if (s2 > 0) {
      res.test = nullity_test(Y, X, res.outcome.active_set, Zhat, kb, s2);
      res.reject = !res.test.degenerate && res.test.p_value < cfg.level;
    } else {
      res.test.degenerate = true;
    }
  }
}

// `stage`, when given, names the step in progress (for error reporting).
inline PipelineResult run_pipeline(const Matrix& X, const Matrix& Z, const Vector& Y, const KernelBasis& kb,
                                   const PipelineConfig& cfg, std::string* stage = nullptr) {
  auto at = [&](const char* s) {
    if (stage) *stage = s;
  };
  at("setup");
  require(X.rows() == Z.rows() && X.rows() == Y.size(), "X, Z, Y row counts differ");
  require(Z.cols() == kb.m(), "Z columns do not match the grid");
  const Index n = X.rows(), p = X.cols();
  PipelineResult res;

  std::vector<Index> rows_z = all_rows(n), rows_y = all_rows(n);
  if (cfg.split) {
    require(n >= 4, "split needs n >= 4");
    rows_z.assign(rows_y.begin(), rows_y.begin() + n / 2);
    rows_y.assign(rows_y.begin() + n / 2, rows_y.end());
  }

  at("screen");
  bool screen = cfg.screen == ScreenMode::On || (cfg.screen == ScreenMode::Auto && p > n);
  if (screen) {
    int ky = cfg.k_y > 0 ? std::min<int>(cfg.k_y, static_cast<int>(p)) : default_screen_size(n, p);
    int kz = cfg.k_z > 0 ? std::min<int>(cfg.k_z, static_cast<int>(p)) : default_screen_size(n, p);
    res.screened = union_screen(sis_rank(Y, X, ky), dcor_screen_functional(Z, X, kz));
  } else {
    for (Index l = 0; l < p; ++l) res.screened.push_back(static_cast<int>(l));
  }
  Matrix Xs = select_columns(X, res.screened);

  at("fit-exposure");
  Matrix Xz = take_rows(Xs, rows_z), Zz = take_rows(Z, rows_z);
  ExposureOptions eo;
  eo.J = std::min<int>(cfg.jz, static_cast<int>(Xs.cols()));
  eo.lambda_k = cfg.lambda_k;
  eo.gcv = cfg.lambda_k_gcv;
  Matrix values_s;
  std::vector<int> active_s;
  bool dc = cfg.dc_blocks > 1 || cfg.window_width < 1.0;
  if (dc) {
    auto part = make_partition(Xz.rows(), cfg.dc_blocks);
    auto plan = make_windows(kb.grid, cfg.window_width, cfg.window_stride);
    DcExposureResult d = dc_exposure_fit(Xz, Zz, kb, eo, part, plan);
    values_s = d.values;
    active_s = d.active_set;
    res.lambda_k = d.lambdas.empty() ? cfg.lambda_k : d.lambdas.front();
  } else {
    ExposureFit f = fgsdar_fit(Xz, Zz, kb, eo);
    values_s = f.values;
    active_s = f.active_set;
    res.lambda_k = f.lambda_k;
    res.exposure_iterations = f.iterations;
    res.exposure_converged = f.converged;
    res.exposure_loss = f.loss;
    res.exposure_coef = Matrix::Zero(p, kb.m());
    for (size_t a = 0; a < res.screened.size(); ++a)
      res.exposure_coef.row(res.screened[a]) = f.coef.row(static_cast<Index>(a));
  }
  res.exposure_values = Matrix::Zero(p, kb.m());
  for (size_t a = 0; a < res.screened.size(); ++a)
    res.exposure_values.row(res.screened[a]) = values_s.row(static_cast<Index>(a));
  for (int a : active_s) res.exposure_active.push_back(res.screened[static_cast<size_t>(a)]);

  at("fit-outcome");
  res.outcome_rows = rows_y;
  Matrix Xy = take_rows(Xs, rows_y);
  Vector Yy = take_rows(Y, rows_y);
  res.zhat = Xy * values_s;
  PipelineResult tmp;
  run_outcome_stage(Yy, Xy, res.zhat, kb, cfg, tmp);
  res.outcome = std::move(tmp.outcome);
  Vector beta = Vector::Zero(p);
  std::vector<int> act;
  for (size_t a = 0; a < res.screened.size(); ++a) beta(res.screened[a]) = res.outcome.beta(static_cast<Index>(a));
  for (int a : res.outcome.active_set) act.push_back(res.screened[static_cast<size_t>(a)]);
  res.outcome.beta = beta;
  res.outcome.active_set = act;
  res.jy = tmp.jy;
  res.tested = tmp.tested;
  res.test = tmp.test;
  res.reject = tmp.reject;
  return res;
}

// Outcome fit and test on observed Z (endogeneity ignored).
inline PipelineResult run_naive(const Matrix& X, const Matrix& Z, const Vector& Y, const KernelBasis& kb,
                                const PipelineConfig& cfg) {
  PipelineResult res;
  for (Index l = 0; l < X.cols(); ++l) res.screened.push_back(static_cast<int>(l));
  res.zhat = Z;
  res.outcome_rows = all_rows(X.rows());
  run_outcome_stage(Y, X, Z, kb, cfg, res);
  return res;
}

// ---------------------------------------------------------------- Monte Carlo

// Named metric values for one replicate, in insertion order.
struct Record {
  std::vector<std::pair<std::string, double>> kv;
  void set(const std::string& k, double v) {
    for (auto& e : kv)
      if (e.first == k) {
        e.second = v;
        return;
      }
    kv.emplace_back(k, v);
  }
  double get(const std::string& k) const {
    for (const auto& e : kv)
      if (e.first == k) return e.second;
    throw ValidationError("missing metric '" + k + "'");
  }
  bool has(const std::string& k) const {
    for (const auto& e : kv)
      if (e.first == k) return true;
    return false;
  }
};

inline uint64_t mix_seed(uint64_t x) {  // splitmix64 finalizer
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline int resolve_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("FLSEM_THREADS")) {
    int v = std::atoi(env);
    if (v > 0) return v;
  }
  return 1;
}

// Runs fn(rep) for rep in [0, reps) on a worker pool; results in rep order.
inline std::vector<Record> run_replicates(int reps, int threads, const std::function<Record(int)>& fn) {
  std::vector<Record> out(static_cast<size_t>(std::max(reps, 0)));
  threads = std::max(1, std::min(threads, reps));
  if (threads <= 1) {
    for (int r = 0; r < reps; ++r) out[static_cast<size_t>(r)] = fn(r);
    return out;
  }
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errs(static_cast<size_t>(threads));
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t)
    pool.emplace_back([&, t] {
      try {
        for (int r = next++; r < reps; r = next++) out[static_cast<size_t>(r)] = fn(r);
      } catch (...) {
        errs[static_cast<size_t>(t)] = std::current_exception();
      }
    });
  for (auto& th : pool) th.join();
  for (auto& e : errs)
    if (e) std::rethrow_exception(e);
  return out;
}

inline Aggregate aggregate(const std::vector<Record>& recs, const std::string& key) {
  std::vector<double> v;
  for (const auto& r : recs)
    if (r.has(key)) v.push_back(r.get(key));
  return mc_aggregate(v);
}

// Estimation replicate: FLSEM pipeline and the observed-Z baseline on one
// training set, scored against truth and an independent test set of n_test.
inline Record estimation_replicate(const SimConfig& sim, const KernelBasis& kb, const PipelineConfig& cfg,
                                   int n_test, bool with_baseline, bool check_fixed_point) {
  FunctionalDataset ds = generate(sim);
  SimConfig tsim = sim;
  tsim.n = n_test;
  tsim.seed = mix_seed(sim.seed);
  FunctionalDataset te = generate(tsim);
  const double delta = kb.delta();
  const Truth& tr = ds.truth;

  PipelineConfig c = cfg;
  c.run_test = false;
  PipelineResult res = run_pipeline(ds.X, ds.Z, ds.Y, kb, c);
  Record rec;
  rec.set("mse_beta", mse_beta(res.outcome.beta, tr.beta));
  rec.set("mse_B", mse_B(res.outcome.B, tr.B, delta));
  auto ey = selection_errors(tr.outcome_support(), res.outcome.active_set);
  auto ez = selection_errors(tr.exposure_support(), res.exposure_active);
  rec.set("fz_y", ey.fz);
  rec.set("fn_y", ey.fn);
  rec.set("fz_z", ez.fz);
  rec.set("fn_z", ez.fn);
  for (int l = 0; l < 5; ++l)
    rec.set("mse_C" + std::to_string(l + 1),
            mse_function(res.exposure_values.row(l).transpose(), tr.C.row(l).transpose(), delta));
  rec.set("pmse_z", pmse_curves(te.X * res.exposure_values, te.Z, delta));
  Vector pred = te.X * res.outcome.beta + delta * (te.Z * res.outcome.B);
  rec.set("pmse_y", pmse(pred, te.Y));
  rec.set("jy", res.jy);
  if (check_fixed_point && res.screened.size() == static_cast<size_t>(ds.p()) && res.exposure_coef.size() != 0) {
    ExposureFit f;
    f.coef = res.exposure_coef;
    f.values = res.exposure_values;
    f.active_set = res.exposure_active;
    f.lambda_k = res.lambda_k;
    rec.set("exposure_converged", res.exposure_converged ? 1 : 0);
    rec.set("fixed_point", fixed_point_check(f, ds.X, ds.Z, kb, res.lambda_k) ? 1 : 0);
  }
  if (with_baseline) {
    PipelineResult b = run_naive(ds.X, ds.Z, ds.Y, kb, c);
    rec.set("pflm_mse_beta", mse_beta(b.outcome.beta, tr.beta));
    rec.set("pflm_mse_B", mse_B(b.outcome.B, tr.B, delta));
    auto eb = selection_errors(tr.outcome_support(), b.outcome.active_set);
    rec.set("pflm_fz_y", eb.fz);
    rec.set("pflm_fn_y", eb.fn);
    Vector pb = te.X * b.outcome.beta + delta * (te.Z * b.outcome.B);
    rec.set("pflm_pmse_y", pmse(pb, te.Y));
  }
  return rec;
}

// Test replicate: FLSEM test and, optionally, the observed-Z test.
inline Record testing_replicate(const SimConfig& sim, const KernelBasis& kb, const PipelineConfig& cfg,
                                bool with_naive) {
  FunctionalDataset ds = generate(sim);
  PipelineConfig c = cfg;
  c.run_test = true;
  PipelineResult res = run_pipeline(ds.X, ds.Z, ds.Y, kb, c);
  Record rec;
  rec.set("reject", res.reject ? 1 : 0);
  rec.set("p_value", res.test.p_value);
  rec.set("S_n", res.test.S_n);
  rec.set("sigma2", res.test.sigma2);
  rec.set("S_sigma2", res.test.S_n * res.test.sigma2);
  rec.set("tr_Rn", res.test.tr_Rn);
  rec.set("tr_Rn2", res.test.tr_Rn2);
  rec.set("zeta", res.test.zeta);
  rec.set("kappa", res.test.kappa);
  rec.set("fz_z", selection_errors(ds.truth.exposure_support(), res.exposure_active).fz);
  if (with_naive) {
    PipelineResult nv = run_naive(ds.X, ds.Z, ds.Y, kb, c);
    rec.set("naive_reject", nv.reject ? 1 : 0);
    rec.set("naive_p_value", nv.test.p_value);
  }
  return rec;
}

// Paired full-sample vs divide-and-conquer replicate.
inline Record dc_replicate(const SimConfig& sim, const KernelBasis& kb, const PipelineConfig& full_cfg,
                           const PipelineConfig& dc_cfg, int n_test) {
  FunctionalDataset ds = generate(sim);
  SimConfig tsim = sim;
  tsim.n = n_test;
  tsim.seed = mix_seed(sim.seed);
  FunctionalDataset te = generate(tsim);
  const double delta = kb.delta();
  Record rec;
  auto score = [&](const PipelineConfig& c, const std::string& pre) {
    PipelineConfig cc = c;
    cc.run_test = false;
    PipelineResult r = run_pipeline(ds.X, ds.Z, ds.Y, kb, cc);
    rec.set(pre + "mse_B", mse_B(r.outcome.B, ds.truth.B, delta));
    rec.set(pre + "mse_beta", mse_beta(r.outcome.beta, ds.truth.beta));
    Vector pred = te.X * r.outcome.beta + delta * (te.Z * r.outcome.B);
    rec.set(pre + "pmse_y", pmse(pred, te.Y));
    rec.set(pre + "pmse_z", pmse_curves(te.X * r.exposure_values, te.Z, delta));
    rec.set(pre + "fz_z", selection_errors(ds.truth.exposure_support(), r.exposure_active).fz);
  };
  score(full_cfg, "full_");
  score(dc_cfg, "dc_");
  return rec;
}

// Benchmark presets.
inline PipelineConfig table_preset() {
  PipelineConfig c;
  c.jz = 15;
  c.lambda_k = 1e-6;
  c.lambda = 1e-3;
  return c;
}

}  // namespace flsem
