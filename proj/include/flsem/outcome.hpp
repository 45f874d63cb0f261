#pragma once

// Partial functional outcome model Y = X beta + int Zhat(t) B(t) dt + error
// with at most J_y nonzero beta and B(t) = sum_j alpha_j K(t, t_j):
//
//   (1/2n) ||Y - X beta - G alpha||^2 + (lambda/2) alpha' Sigma alpha,
//   G = Delta Zhat Sigma.
//
// The B-part is solved in the reduced coordinates eta = Lam^{1/2} U' alpha, which
// give G alpha = F eta with F = Delta Zhat U Lam^{1/2} and alpha' Sigma alpha = |eta|^2.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <vector>

#include "flsem/exposure.hpp"
#include "flsem/numerics.hpp"

namespace flsem {

enum class Sigma2Mode { Residual, DfCharged };

struct OutcomeFit {
  Vector beta;                  // p
  std::vector<int> active_set;  // ascending
  Vector alpha;                 // m representer coefficients
  Vector B;                     // m values Sigma alpha
  double lambda = 0;
  double sigma2 = 0;
  double loss = 0;
  double rss = 0;
  double df_b = 0;  // effective degrees of freedom of the B-part
  int iterations = 0;
  bool converged = false;
  bool cycled = false;
};

struct OutcomeOptions {
  int J = 6;
  double lambda = 1e-3;
  int max_iter = 100;
  Sigma2Mode sigma2 = Sigma2Mode::Residual;
};

// 1e-3 * trace(Sigma) / m.
inline double default_outcome_lambda(const KernelBasis& kb) {
  return 1e-3 * kb.sigma.trace() / static_cast<double>(kb.m());
}

inline Matrix select_columns(const Matrix& X, const std::vector<int>& A) {
  Matrix out(X.rows(), static_cast<Index>(A.size()));
  for (size_t a = 0; a < A.size(); ++a) out.col(static_cast<Index>(a)) = X.col(A[a]);
  return out;
}

// Precomputed products for repeated support fits on the same data.
class OutcomeDesign {
 public:
  OutcomeDesign(const Vector& Y, const Matrix& X, const Matrix& Zhat, const KernelBasis& kb)
      : kb_(&kb), Y_(Y), X_(X), n_(X.rows()), p_(X.cols()) {
    require(Y.size() == X.rows() && Zhat.rows() == X.rows(), "Y, X, Zhat row counts differ");
    require(Zhat.cols() == kb.m(), "Zhat columns do not match the grid");
    require(Y.allFinite() && X.allFinite() && Zhat.allFinite(), "non-finite outcome inputs");
    r_ = kb.rank;
    Ur_ = kb.U.leftCols(r_);
    sqrt_lam_ = kb.lam.head(r_).cwiseSqrt();
    F_ = kb.delta() * (Zhat * Ur_) * sqrt_lam_.asDiagonal();
    XtX_ = X.transpose() * X;
    XtY_ = X.transpose() * Y;
    colsq_ = XtX_.diagonal();
    primal_ = r_ <= n_;
    if (primal_) {
      FtF_ = F_.transpose() * F_;
      FtX_ = F_.transpose() * X;
      FtY_ = F_.transpose() * Y;
    } else {
      K_ = F_ * F_.transpose();
      KX_ = K_ * X;
      KY_ = K_ * Y;
    }
  }

  Index n() const { return n_; }
  Index p() const { return p_; }
  const Matrix& X() const { return X_; }
  const Vector& Y() const { return Y_; }
  const Vector& colsq() const { return colsq_; }
  const KernelBasis& basis() const { return *kb_; }

  struct SupportFit {
    std::vector<int> A;
    Vector betaA;
    Vector eta;
    Vector fitted;  // X_A beta_A + F eta
    double rss = 0;
    double df_b = 0;
  };

  SupportFit fit(const std::vector<int>& A, double lambda, bool want_df = false) const {
    require(lambda > 0 && std::isfinite(lambda), "lambda must be positive");
    const Index J = static_cast<Index>(A.size());
    const double nl = static_cast<double>(n_) * lambda;
    SupportFit out;
    out.A = A;
    Matrix GA(J, J);
    Vector XtYA(J);
    for (Index a = 0; a < J; ++a) {
      XtYA(a) = XtY_(A[static_cast<size_t>(a)]);
      for (Index b = 0; b < J; ++b) GA(a, b) = XtX_(A[static_cast<size_t>(a)], A[static_cast<size_t>(b)]);
    }
    Eigen::LLT<Matrix> ga(GA);
    if (J > 0) {
      double scale = std::max(1.0, GA.diagonal().maxCoeff());
      if (ga.info() != Eigen::Success || ga.matrixL().toDenseMatrix().diagonal().minCoeff() <= 1e-6 * std::sqrt(scale))
        throw NumericalError("rank-deficient X_A in outcome fit");
    }
    Matrix XA = select_columns(X_, A);

    if (primal_) {
      Matrix FtXA(r_, J);
      for (Index a = 0; a < J; ++a) FtXA.col(a) = FtX_.col(A[static_cast<size_t>(a)]);
      Matrix H = FtF_;
      Vector rhs = FtY_;
      if (J > 0) {
        Matrix T = ga.solve(FtXA.transpose());  // J x r
        H.noalias() -= FtXA * T;
        rhs.noalias() -= FtXA * ga.solve(XtYA);
      }
      H.diagonal().array() += nl;
      Eigen::LLT<Matrix> h(H);
      if (h.info() != Eigen::Success) throw NumericalError("outcome B-system is not positive definite");
      out.eta = h.solve(rhs);
      if (want_df) out.df_b = static_cast<double>(r_) - nl * h.solve(Matrix::Identity(r_, r_)).trace();
    } else {
      // eta = (MF)' (M K M + n lambda I)^{-1} M Y with K = F F'.
      Matrix MKM = K_;
      Vector MY = Y_;
      if (J > 0) {
        Matrix KXA(n_, J);
        for (Index a = 0; a < J; ++a) KXA.col(a) = KX_.col(A[static_cast<size_t>(a)]);
        Matrix XtKX = XA.transpose() * KXA;          // J x J
        Matrix S = ga.solve(XA.transpose());         // J x n
        Matrix KXS = KXA * S;                        // K P
        MKM.noalias() -= KXS;
        MKM.noalias() -= KXS.transpose();
        MKM.noalias() += S.transpose() * (XtKX * S);
        MY.noalias() -= XA * ga.solve(XtYA);
      }
      MKM = 0.5 * (MKM + MKM.transpose());
      MKM.diagonal().array() += nl;
      Eigen::LLT<Matrix> h(MKM);
      if (h.info() != Eigen::Success) throw NumericalError("outcome B-system is not positive definite");
      Vector u = h.solve(MY);
      if (J > 0) u.noalias() -= XA * ga.solve(XA.transpose() * u);  // M u
      out.eta = F_.transpose() * u;
      if (want_df) out.df_b = static_cast<double>(n_) - nl * h.solve(Matrix::Identity(n_, n_)).trace();
    }
    Vector Feta = F_ * out.eta;
    out.betaA = J > 0 ? Vector(ga.solve(XA.transpose() * (Y_ - Feta))) : Vector(0);
    out.fitted = Feta;
    if (J > 0) out.fitted.noalias() += XA * out.betaA;
    out.rss = (Y_ - out.fitted).squaredNorm();
    return out;
  }

  double loss(const SupportFit& f, double lambda) const {
    return f.rss / (2.0 * static_cast<double>(n_)) + 0.5 * lambda * f.eta.squaredNorm();
  }

  Vector alpha_of(const Vector& eta) const { return Ur_ * eta.cwiseQuotient(sqrt_lam_); }
  Vector B_of(const Vector& eta) const { return Ur_ * eta.cwiseProduct(sqrt_lam_); }

 private:
  const KernelBasis* kb_;
  Vector Y_;
  Matrix X_;
  Index n_, p_, r_ = 0;
  bool primal_ = true;
  Matrix Ur_, F_, XtX_, FtF_, FtX_, K_, KX_;
  Vector sqrt_lam_, XtY_, colsq_, FtY_, KY_;
};

// Closed-form (alpha, beta_A) on a fixed support.
struct SupportSolution {
  Vector alpha;
  Vector B;
  Vector betaA;
};

inline SupportSolution fit_b_given_support(const Vector& Y, const Matrix& Zhat, const std::vector<int>& A,
                                           const Matrix& X, const KernelBasis& kb, double lambda) {
  OutcomeDesign d(Y, X, Zhat, kb);
  auto f = d.fit(A, lambda);
  return {d.alpha_of(f.eta), d.B_of(f.eta), f.betaA};
}

namespace detail {

inline OutcomeFit finish_outcome(const OutcomeDesign& d, const OutcomeDesign::SupportFit& sf, double lambda,
                                 Sigma2Mode mode) {
  OutcomeFit f;
  f.beta = Vector::Zero(d.p());
  for (size_t a = 0; a < sf.A.size(); ++a) f.beta(sf.A[a]) = sf.betaA(static_cast<Index>(a));
  f.active_set = sf.A;
  f.alpha = d.alpha_of(sf.eta);
  f.B = d.B_of(sf.eta);
  f.lambda = lambda;
  f.rss = sf.rss;
  f.loss = d.loss(sf, lambda);
  auto full = d.fit(sf.A, lambda, true);
  f.df_b = full.df_b;
  double dof = static_cast<double>(d.n()) - static_cast<double>(sf.A.size());
  if (mode == Sigma2Mode::DfCharged) dof -= f.df_b;
  if (!(dof > 0)) throw NumericalError("no residual degrees of freedom for sigma^2");
  f.sigma2 = sf.rss / dof;
  return f;
}

}  // namespace detail

// SDAR iteration started from the B-only fit (beta = 0, alpha fitted on the
// empty support). Scores (|X_l|^2/n) (beta_l + d_l)^2 with the Newton dual
// d_l = X_l' r / |X_l|^2; for unit-variance columns this orders groups as
// |beta_l + X_l' r / n|.
inline OutcomeFit outcome_fit(const OutcomeDesign& d, const OutcomeOptions& opt) {
  require(opt.J >= 0 && opt.J <= d.p(), "need 0 <= J_y <= p");
  require(opt.J < d.n(), "need J_y < n");
  const double n = static_cast<double>(d.n());
  auto cur = d.fit({}, opt.lambda);
  Vector beta = Vector::Zero(d.p());
  std::map<std::vector<int>, size_t> seen;
  std::vector<OutcomeDesign::SupportFit> visited;
  bool converged = false, cycled = false;
  int it = 0;
  if (opt.J == 0) converged = true;
  while (!converged && it < opt.max_iter) {
    ++it;
    Vector corr = d.X().transpose() * (d.Y() - cur.fitted);
    Vector score(d.p());
    for (Index l = 0; l < d.p(); ++l) {
      double s = d.colsq()(l);
      double dl = s > 0 ? corr(l) / s : 0.0;
      double w = beta(l) + dl;
      score(l) = s * w * w / n;
    }
    std::vector<int> A = detail::sorted_top(score, opt.J);
    if (A == cur.A) {
      converged = true;
      break;
    }
    if (seen.count(A)) {
      cycled = true;
      break;
    }
    cur = d.fit(A, opt.lambda);
    beta.setZero();
    for (size_t a = 0; a < A.size(); ++a) beta(A[a]) = cur.betaA(static_cast<Index>(a));
    seen[A] = visited.size();
    visited.push_back(cur);
  }
  if (cycled) {
    size_t best = 0;
    for (size_t i = 1; i < visited.size(); ++i)
      if (d.loss(visited[i], opt.lambda) < d.loss(visited[best], opt.lambda)) best = i;
    cur = visited[best];
  }
  OutcomeFit f = detail::finish_outcome(d, cur, opt.lambda, opt.sigma2);
  f.iterations = it;
  f.converged = converged;
  f.cycled = cycled;
  return f;
}

inline OutcomeFit outcome_fit(const Vector& Y, const Matrix& X, const Matrix& Zhat, const KernelBasis& kb,
                              const OutcomeOptions& opt) {
  OutcomeDesign d(Y, X, Zhat, kb);
  return outcome_fit(d, opt);
}

// Outcome fit ignoring endogeneity: observed Z in place of Zhat.
inline OutcomeFit pflm_baseline_fit(const Vector& Y, const Matrix& X, const Matrix& Z, const KernelBasis& kb,
                                    const OutcomeOptions& opt) {
  return outcome_fit(Y, X, Z, kb, opt);
}

inline double hbic(const OutcomeFit& f, Index n, Index p) {
  double s2 = std::max(f.sigma2, std::numeric_limits<double>::min());
  double nn = static_cast<double>(n);
  return std::log(s2) + static_cast<double>(f.active_set.size()) * std::log(static_cast<double>(p)) *
                            std::log(std::log(nn)) / nn;
}

struct SparsitySelection {
  int J = 0;
  OutcomeFit fit;
  std::vector<double> criterion;  // HBIC per grid entry
};

inline SparsitySelection select_sparsity(const OutcomeDesign& d, const std::vector<int>& J_grid,
                                         OutcomeOptions opt) {
  require(!J_grid.empty(), "J grid must be nonempty");
  SparsitySelection best;
  double best_v = std::numeric_limits<double>::infinity();
  for (int J : J_grid) {
    opt.J = J;
    OutcomeFit f = outcome_fit(d, opt);
    double v = hbic(f, d.n(), d.p());
    best.criterion.push_back(v);
    if (v < best_v) {
      best_v = v;
      best.J = J;
      best.fit = std::move(f);
    }
  }
  return best;
}

inline SparsitySelection select_sparsity(const Vector& Y, const Matrix& X, const Matrix& Zhat, const KernelBasis& kb,
                                         const std::vector<int>& J_grid, const OutcomeOptions& opt) {
  OutcomeDesign d(Y, X, Zhat, kb);
  return select_sparsity(d, J_grid, opt);
}

}  // namespace flsem
