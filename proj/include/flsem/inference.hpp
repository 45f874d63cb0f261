#pragma once

// Nullity test for B(t) == 0: S_n = (M Y)' W (M Y) / (n sigma^2),
// W = Delta^2 Zhat Sigma Zhat', M the projection off the selected controls,
// calibrated by a scaled chi-square kappa * chi^2_zeta matched to R_n.

#include <cmath>
#include <vector>

#include "flsem/exposure.hpp"
#include "flsem/numerics.hpp"
#include "flsem/outcome.hpp"

namespace flsem {

struct TestResult {
  double S_n = 0;
  double zeta = 0;
  double kappa = 0;
  double sigma2 = 0;
  double p_value = 1;
  double tr_Rn = 0;
  double tr_Rn2 = 0;
  bool degenerate = false;
};

// Applies M = I - X_A (X_A'X_A)^{-1} X_A' to the columns of V.
class Projector {
 public:
  Projector(const Matrix& X, const std::vector<int>& A) : XA_(select_columns(X, A)) {
    if (XA_.cols() > 0) {
      qr_.compute(XA_);
      if (qr_.rank() < XA_.cols()) throw NumericalError("rank-deficient X_A in projection");
    }
  }

  Matrix apply(const Matrix& V) const {
    if (XA_.cols() == 0) return V;
    Matrix coef = qr_.solve(V);
    return V - XA_ * coef;
  }

  Matrix dense(Index n) const { return apply(Matrix::Identity(n, n)); }

 private:
  Matrix XA_;
  Eigen::ColPivHouseholderQR<Matrix> qr_;
};

// Tilde matrix of R_n = K^{1/2} (Delta n^{-1} Zhat' M Zhat) K^{1/2}, K = Delta Sigma.
inline OperatorMatrix build_Rn(const Matrix& Zhat, const std::vector<int>& A, const Matrix& X,
                               const KernelBasis& kb) {
  require(Zhat.rows() == X.rows(), "Zhat and X row counts differ");
  require(Zhat.cols() == kb.m(), "Zhat columns do not match the grid");
  const double n = static_cast<double>(Zhat.rows());
  const double delta = kb.delta();
  Projector P(X, A);
  Matrix MZ = P.apply(Zhat);
  Matrix inner = (delta / n) * (Zhat.transpose() * MZ);
  inner = 0.5 * (inner + inner.transpose());
  Vector root = (delta * kb.lam).cwiseSqrt();
  Matrix Kh = kb.U * root.asDiagonal() * kb.U.transpose();
  Matrix R = Kh * inner * Kh;
  return {0.5 * (R + R.transpose())};
}

inline double test_statistic(const Vector& Y, const Matrix& X, const std::vector<int>& A, const Matrix& Zhat,
                             const KernelBasis& kb, double sigma2) {
  require(sigma2 > 0, "sigma^2 must be positive");
  require(Y.size() == X.rows() && Zhat.rows() == X.rows(), "Y, X, Zhat row counts differ");
  Projector P(X, A);
  Vector MY = P.apply(Y);
  Vector v = Zhat.transpose() * MY;
  const double delta = kb.delta();
  double q = delta * delta * v.dot(kb.sigma * v);
  return std::max(0.0, q) / (static_cast<double>(Y.size()) * sigma2);
}

struct Satterthwaite {
  double zeta = 0;
  double kappa = 0;
  double tr = 0;
  double tr2 = 0;
};

inline Satterthwaite welch_satterthwaite(const OperatorMatrix& R) {
  Satterthwaite w;
  w.tr = R.trace();
  w.tr2 = R.trace_sq();
  if (!(w.tr > 1e-12)) throw NumericalError("degenerate test: trace of R_n is not positive");
  w.zeta = w.tr * w.tr / w.tr2;
  w.kappa = w.tr2 / w.tr;
  return w;
}

inline double null_pvalue(double S_n, double zeta, double kappa) {
  require(zeta > 0 && kappa > 0, "zeta and kappa must be positive");
  return chi2_upper_tail(S_n / kappa, zeta);
}

// Full test given the selected controls A and a residual variance.
inline TestResult nullity_test(const Vector& Y, const Matrix& X, const std::vector<int>& A, const Matrix& Zhat,
                               const KernelBasis& kb, double sigma2) {
  TestResult t;
  t.sigma2 = sigma2;
  t.S_n = test_statistic(Y, X, A, Zhat, kb, sigma2);
  OperatorMatrix R = build_Rn(Zhat, A, X, kb);
  t.tr_Rn = R.trace();
  t.tr_Rn2 = R.trace_sq();
  if (!(t.tr_Rn > 1e-12)) {
    t.degenerate = true;
    t.p_value = 1.0;
    return t;
  }
  Satterthwaite w = welch_satterthwaite(R);
  t.zeta = w.zeta;
  t.kappa = w.kappa;
  t.p_value = null_pvalue(t.S_n, t.zeta, t.kappa);
  return t;
}

}  // namespace flsem
