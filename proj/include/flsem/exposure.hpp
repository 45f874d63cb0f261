#pragma once

// Function-on-scalar exposure model Z_i(t) = sum_l X_il C_l(t) + E_i(t) with
// C_l(t) = sum_j coef_lj K(t, t_j), fitted by group support detection and
// root finding (FGSDAR) under the objective
//
//   (1/2nm) ||Z - X coef Sigma||^2 + (lambda_K/2) sum_l coef_l' Sigma coef_l
//
// subject to at most J nonzero rows of coef.
//
// All per-iteration algebra runs in the eigenbasis Sigma = U diag(lam) U'.
// There the blockwise system ((X_A'X_A) (x) Sigma^2 + c I (x) Sigma) separates into
// m independent J x J ridge problems, c = n m lambda_K.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <vector>

#include "flsem/numerics.hpp"
#include "flsem/screening.hpp"

namespace flsem {

// Gram matrix of a kernel on a grid together with its eigendecomposition.
struct KernelBasis {
  Grid grid;
  KernelSpec kernel;
  Matrix sigma;  // pointwise K(t_j, t_k)
  Vector lam;    // eigenvalues, descending; zero below 1e-12 * max
  Matrix U;      // eigenvectors
  Index rank = 0;

  Index m() const { return sigma.rows(); }
  double delta() const { return grid.weight; }

  static KernelBasis from_gram(Matrix sigma, Grid grid, KernelSpec kernel = {}) {
    require(sigma.rows() == sigma.cols() && sigma.rows() == grid.size(), "Gram matrix does not match grid");
    KernelBasis kb;
    kb.grid = std::move(grid);
    kb.kernel = kernel;
    kb.sigma = std::move(sigma);
    EigenDecomp d = sym_eig(kb.sigma);
    double top = d.values.size() ? d.values(0) : 0.0;
    require(top > 0, "kernel Gram matrix is zero");
    if (d.values(d.values.size() - 1) < -1e-10 * top) throw NumericalError("kernel Gram matrix is not PSD");
    kb.lam = d.values;
    kb.U = d.vectors;
    kb.rank = 0;
    for (Index j = 0; j < kb.lam.size(); ++j) {
      if (kb.lam(j) <= 1e-12 * top) kb.lam(j) = 0.0;
      else ++kb.rank;
    }
    return kb;
  }

  static KernelBasis build(const KernelSpec& kernel, const Grid& grid) {
    return from_gram(gram_matrix(kernel, grid), grid, kernel);
  }

  KernelBasis restrict_to(const std::vector<int>& idx) const {
    Matrix s(static_cast<Index>(idx.size()), static_cast<Index>(idx.size()));
    for (size_t a = 0; a < idx.size(); ++a)
      for (size_t b = 0; b < idx.size(); ++b) s(static_cast<Index>(a), static_cast<Index>(b)) = sigma(idx[a], idx[b]);
    return from_gram(std::move(s), grid.subset(idx), kernel);
  }
};

struct ExposureFit {
  std::vector<int> active_set;  // ascending
  Matrix coef;                  // p x m representer coefficients
  Matrix values;                // p x m function values coef * Sigma
  double lambda_k = 0;
  Grid grid;
  KernelSpec kernel;
  int iterations = 0;
  double loss = 0;
  bool converged = false;
  bool cycled = false;
};

struct FgsdarState {
  std::vector<int> active;  // ascending
  Matrix Ct;                // p x m, coef in the eigenbasis (coef * U)
  Matrix Dt;                // p x m, dual in the eigenbasis
  double loss = 0;
};

struct ExposureOptions {
  int J = 10;
  double lambda_k = 1e-6;
  bool gcv = false;
  std::vector<double> lambda_grid;  // empty: default ladder
  int max_iter = 50;
};

// 10 log-spaced values in [1e-6, 1e-1].
inline std::vector<double> default_lambda_grid() {
  std::vector<double> g;
  for (int i = 0; i < 10; ++i) g.push_back(std::pow(10.0, -6.0 + 5.0 * i / 9.0));
  return g;
}

namespace detail {

// Cross products shared by all iterations of one fit.
struct ExposureWork {
  const KernelBasis* kb;
  Index n, p, m;
  double c;     // n m lambda_K
  Matrix XtX;   // p x p
  Matrix XtZt;  // p x m, X' Z U
  Vector s;     // diag(X'X)
  double zt_sq; // ||Z||^2

  ExposureWork(const Matrix& X, const Matrix& Z, const KernelBasis& basis, double lambda_k)
      : kb(&basis), n(X.rows()), p(X.cols()), m(Z.cols()) {
    require(X.rows() == Z.rows(), "X and Z row counts differ");
    require(Z.cols() == basis.m(), "Z columns do not match the grid");
    require(lambda_k >= 0 && std::isfinite(lambda_k), "lambda_K must be a nonnegative real");
    require(X.allFinite() && Z.allFinite(), "non-finite exposure inputs");
    c = static_cast<double>(n) * static_cast<double>(m) * lambda_k;
    XtX = X.transpose() * X;
    XtZt = X.transpose() * (Z * basis.U);
    s = XtX.diagonal();
    zt_sq = Z.squaredNorm();
  }

  double nm() const { return static_cast<double>(n) * static_cast<double>(m); }

  // Ct rows on A solved from (G lam_j + c) ct_j = r_j, other rows zero.
  Matrix solve(const std::vector<int>& A) const {
    const Index J = static_cast<Index>(A.size());
    Matrix Ct = Matrix::Zero(p, m);
    if (J == 0) return Ct;
    Matrix G(J, J), R(J, m);
    for (Index a = 0; a < J; ++a) {
      R.row(a) = XtZt.row(A[static_cast<size_t>(a)]);
      for (Index b = 0; b < J; ++b) G(a, b) = XtX(A[static_cast<size_t>(a)], A[static_cast<size_t>(b)]);
    }
    Matrix sol = solve_blocks(G, R, kb->lam, c);
    for (Index a = 0; a < J; ++a) Ct.row(A[static_cast<size_t>(a)]) = sol.row(a);
    return Ct;
  }

  static Matrix solve_blocks(const Matrix& G, const Matrix& R, const Vector& lam, double c) {
    EigenDecomp eg = sym_eig(G, 1e-10);
    Matrix Q = eg.vectors.transpose() * R;
    for (Index j = 0; j < Q.cols(); ++j) {
      if (lam(j) <= 0) {
        Q.col(j).setZero();
        continue;
      }
      for (Index k = 0; k < Q.rows(); ++k) {
        double den = std::max(0.0, eg.values(k)) * lam(j) + c;
        if (!(den > 1e-300)) throw NumericalError("singular active-set system (rank-deficient X_A with lambda_K = 0)");
        Q(k, j) /= den;
      }
    }
    return eg.vectors * Q;
  }

  // X' Rt with Rt = (Z - X coef Sigma) U, using only the nonzero rows of Ct.
  Matrix resid_corr(const Matrix& Ct, const std::vector<int>& A) const {
    Matrix out = XtZt;
    for (int l : A) {
      Vector w = Ct.row(l).transpose().cwiseProduct(kb->lam);
      out.noalias() -= XtX.col(l) * w.transpose();
    }
    return out;
  }

  double loss(const Matrix& Ct, const std::vector<int>& A) const {
    // ||Rt||^2 = ||Z||^2 - 2 <X'Zt, W> + <W, X'X W>, W = Ct diag(lam) on A.
    double fit_cross = 0, fit_sq = 0, pen = 0;
    for (int a : A) {
      Vector wa = Ct.row(a).transpose().cwiseProduct(kb->lam);
      fit_cross += XtZt.row(a).dot(wa);
      pen += Ct.row(a).cwiseAbs2().dot(kb->lam);
      for (int b : A) {
        Vector wb = Ct.row(b).transpose().cwiseProduct(kb->lam);
        fit_sq += XtX(a, b) * wa.dot(wb);
      }
    }
    double rss = std::max(0.0, zt_sq - 2 * fit_cross + fit_sq);
    return rss / (2 * nm()) + 0.5 * (c / nm()) * pen;
  }

  // Newton-scaled dual d_l = (P_l / nm)^{-1} (-grad_l), P_l = s_l Sigma^2 + c Sigma.
  Matrix dual(const Matrix& Ct, const std::vector<int>& A) const {
    Matrix D = resid_corr(Ct, A);
    for (Index l = 0; l < p; ++l)
      for (Index j = 0; j < m; ++j) {
        double lj = kb->lam(j);
        if (lj <= 0) {
          D(l, j) = 0;
          continue;
        }
        double den = s(l) * lj + c;
        D(l, j) = den > 0 ? (D(l, j) - c * Ct(l, j)) / den : 0.0;
      }
    return D;
  }

  // Group score (C_l + d_l)' (P_l / nm) (C_l + d_l).
  Vector scores(const Matrix& Ct, const Matrix& Dt) const {
    Vector q(p);
    for (Index l = 0; l < p; ++l) {
      double acc = 0;
      for (Index j = 0; j < m; ++j) {
        double lj = kb->lam(j);
        double w = Ct(l, j) + Dt(l, j);
        acc += (s(l) * lj * lj + c * lj) * w * w;
      }
      q(l) = acc / nm();
    }
    return q;
  }
};

inline std::vector<int> sorted_top(const Vector& score, int J) {
  std::vector<int> A = top_k(score, J);
  std::sort(A.begin(), A.end());
  return A;
}

}  // namespace detail

// Exact minimizer of the exposure objective restricted to the columns X_A.
inline Matrix ridge_solve_active(const Matrix& XA, const Matrix& Z, const KernelBasis& basis, double lambda_k) {
  require(XA.rows() == Z.rows(), "X_A and Z row counts differ");
  require(Z.cols() == basis.m(), "Z columns do not match the grid");
  const double c = static_cast<double>(Z.rows()) * static_cast<double>(Z.cols()) * lambda_k;
  Matrix R = XA.transpose() * (Z * basis.U);
  Matrix G = XA.transpose() * XA;
  return detail::ExposureWork::solve_blocks(G, R, basis.lam, c) * basis.U.transpose();
}

inline double exposure_loss(const Matrix& X, const Matrix& Z, const Matrix& coef, const KernelBasis& basis,
                            double lambda_k) {
  const double nm = static_cast<double>(Z.rows()) * static_cast<double>(Z.cols());
  Matrix R = Z - X * coef * basis.sigma;
  double pen = (coef * basis.sigma).cwiseProduct(coef).sum();
  return R.squaredNorm() / (2 * nm) + 0.5 * lambda_k * pen;
}

inline FgsdarState fgsdar_init(const Matrix& X, const Matrix& Z, const KernelBasis& basis, double lambda_k) {
  detail::ExposureWork w(X, Z, basis, lambda_k);
  FgsdarState st;
  st.Ct = Matrix::Zero(w.p, w.m);
  st.Dt = w.dual(st.Ct, st.active);
  st.loss = w.loss(st.Ct, st.active);
  return st;
}

namespace detail {
inline FgsdarState step(const ExposureWork& w, const FgsdarState& st, int J) {
  FgsdarState nx;
  nx.active = sorted_top(w.scores(st.Ct, st.Dt), J);
  nx.Ct = w.solve(nx.active);
  nx.Dt = w.dual(nx.Ct, nx.active);
  for (int l : nx.active) nx.Dt.row(l).setZero();
  nx.loss = w.loss(nx.Ct, nx.active);
  return nx;
}
}  // namespace detail

inline FgsdarState fgsdar_step(const FgsdarState& st, const Matrix& X, const Matrix& Z, const KernelBasis& basis,
                               double lambda_k, int J) {
  require(J >= 1 && J <= X.cols(), "need 1 <= J <= p");
  detail::ExposureWork w(X, Z, basis, lambda_k);
  return detail::step(w, st, J);
}

inline ExposureFit make_exposure_fit(const FgsdarState& st, const KernelBasis& basis, double lambda_k) {
  ExposureFit f;
  f.active_set = st.active;
  f.coef = st.Ct * basis.U.transpose();
  f.values = (st.Ct * basis.lam.asDiagonal()) * basis.U.transpose();
  f.lambda_k = lambda_k;
  f.grid = basis.grid;
  f.kernel = basis.kernel;
  f.loss = st.loss;
  return f;
}

inline ExposureFit fgsdar_fit_fixed(const Matrix& X, const Matrix& Z, const KernelBasis& basis, int J,
                                    double lambda_k, int max_iter = 50) {
  require(J >= 1 && J <= X.cols(), "need 1 <= J <= p");
  require(X.rows() >= J, "need n >= J");
  detail::ExposureWork w(X, Z, basis, lambda_k);
  FgsdarState st;
  st.Ct = Matrix::Zero(w.p, w.m);
  st.Dt = w.dual(st.Ct, st.active);
  st.loss = w.loss(st.Ct, st.active);

  std::map<std::vector<int>, size_t> seen;
  std::vector<FgsdarState> visited;
  bool converged = false, cycled = false;
  int it = 0;
  FgsdarState cur = st;
  while (it < max_iter) {
    ++it;
    std::vector<int> A = detail::sorted_top(w.scores(cur.Ct, cur.Dt), J);
    if (A == cur.active) {
      converged = true;
      break;
    }
    if (seen.count(A)) {
      cycled = true;
      break;
    }
    FgsdarState nx;
    nx.active = A;
    nx.Ct = w.solve(A);
    nx.Dt = w.dual(nx.Ct, A);
    for (int l : A) nx.Dt.row(l).setZero();
    nx.loss = w.loss(nx.Ct, A);
    seen[A] = visited.size();
    visited.push_back(nx);
    cur = std::move(nx);
  }
  if (cycled) {
    size_t best = 0;
    for (size_t i = 1; i < visited.size(); ++i)
      if (visited[i].loss < visited[best].loss) best = i;
    cur = visited[best];
  }
  ExposureFit f = make_exposure_fit(cur, basis, lambda_k);
  f.iterations = it;
  f.converged = converged;
  f.cycled = cycled;
  return f;
}

// GCV(lambda) = (RSS/nm) / (1 - df/nm)^2 with df the trace of the active-set hat matrix.
inline double exposure_gcv(const Matrix& X, const Matrix& Z, const KernelBasis& basis, const ExposureFit& fit) {
  const double nm = static_cast<double>(Z.rows()) * static_cast<double>(Z.cols());
  const double c = nm * fit.lambda_k;
  double rss = (Z - X * fit.values).squaredNorm();
  double df = 0;
  if (!fit.active_set.empty()) {
    Matrix XA(X.rows(), static_cast<Index>(fit.active_set.size()));
    for (size_t a = 0; a < fit.active_set.size(); ++a) XA.col(static_cast<Index>(a)) = X.col(fit.active_set[a]);
    Vector g = sym_eig(XA.transpose() * XA, 1e-10).values;
    for (Index j = 0; j < basis.lam.size(); ++j) {
      if (basis.lam(j) <= 0) continue;
      for (Index k = 0; k < g.size(); ++k) {
        double gl = std::max(0.0, g(k)) * basis.lam(j);
        if (gl + c > 0) df += gl / (gl + c);
      }
    }
  }
  if (df >= nm) return std::numeric_limits<double>::infinity();
  double r = 1.0 - df / nm;
  return (rss / nm) / (r * r);
}

inline double gcv_select(const Matrix& X, const Matrix& Z, const KernelBasis& basis, int J,
                         const std::vector<double>& grid, int max_iter = 50) {
  require(!grid.empty(), "lambda grid must be nonempty");
  for (double l : grid) require(l > 0 && std::isfinite(l), "lambda grid values must be positive");
  if (grid.size() == 1) return grid.front();
  double best = grid.front(), best_v = std::numeric_limits<double>::infinity();
  for (double l : grid) {
    ExposureFit f = fgsdar_fit_fixed(X, Z, basis, J, l, max_iter);
    double v = exposure_gcv(X, Z, basis, f);
    if (v < best_v) {
      best_v = v;
      best = l;
    }
  }
  return best;
}

inline ExposureFit fgsdar_fit(const Matrix& X, const Matrix& Z, const KernelBasis& basis,
                              const ExposureOptions& opt) {
  double lk = opt.lambda_k;
  if (opt.gcv) lk = gcv_select(X, Z, basis, opt.J, opt.lambda_grid.empty() ? default_lambda_grid() : opt.lambda_grid,
                               opt.max_iter);
  return fgsdar_fit_fixed(X, Z, basis, opt.J, lk, opt.max_iter);
}

inline Matrix predict_zhat(const ExposureFit& fit, const Matrix& X) {
  require(X.cols() == fit.values.rows(), "X column count does not match the exposure fit");
  return X * fit.values;
}

struct FixedPointReport {
  bool ok = false;
  double dual_active = 0;      // max |d| on the active set, relative
  double min_active_score = 0;
  double max_inactive_score = 0;
};

// Checks coef = H(coef + d): vanishing dual on the active set, and every
// active group score at least every inactive one (or, given lambda0, active
// scores >= 2 lambda0 > inactive scores).
inline FixedPointReport fixed_point_report(const ExposureFit& fit, const Matrix& X, const Matrix& Z,
                                           const KernelBasis& basis, double lambda_k,
                                           std::optional<double> lambda0 = std::nullopt) {
  detail::ExposureWork w(X, Z, basis, lambda_k);
  Matrix Ct = fit.coef * basis.U;
  for (Index j = 0; j < basis.lam.size(); ++j)
    if (basis.lam(j) <= 0) Ct.col(j).setZero();
  std::vector<int> nz;
  for (Index l = 0; l < w.p; ++l)
    if (Ct.row(l).cwiseAbs().maxCoeff() > 0) nz.push_back(static_cast<int>(l));
  Matrix Dt = w.dual(Ct, nz);
  FixedPointReport r;
  double scale = 1.0;
  for (int l : fit.active_set) scale = std::max(scale, Ct.row(l).cwiseAbs().maxCoeff());
  for (int l : fit.active_set) r.dual_active = std::max(r.dual_active, Dt.row(l).cwiseAbs().maxCoeff() / scale);
  Vector q = w.scores(Ct, Dt);
  std::vector<char> in(static_cast<size_t>(w.p), 0);
  for (int l : fit.active_set) in[static_cast<size_t>(l)] = 1;
  r.min_active_score = std::numeric_limits<double>::infinity();
  r.max_inactive_score = 0;
  for (Index l = 0; l < w.p; ++l) {
    if (in[static_cast<size_t>(l)]) r.min_active_score = std::min(r.min_active_score, q(l));
    else r.max_inactive_score = std::max(r.max_inactive_score, q(l));
  }
  bool sep = r.min_active_score >= r.max_inactive_score;
  if (lambda0) sep = r.min_active_score >= 2 * *lambda0 && r.max_inactive_score < 2 * *lambda0;
  for (int l : nz)
    if (!in[static_cast<size_t>(l)]) sep = false;
  r.ok = r.dual_active <= 1e-8 && sep;
  return r;
}

inline bool fixed_point_check(const ExposureFit& fit, const Matrix& X, const Matrix& Z, const KernelBasis& basis,
                              double lambda_k, std::optional<double> lambda0 = std::nullopt) {
  return fixed_point_report(fit, X, Z, basis, lambda_k, lambda0).ok;
}

}  // namespace flsem
