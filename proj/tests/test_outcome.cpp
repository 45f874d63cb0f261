#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "flsem/datagen.hpp"
#include "flsem/inference.hpp"
#include "flsem/outcome.hpp"

using namespace flsem;

namespace {

struct Small {
  Matrix X, Zh;
  Vector Y;
  KernelBasis kb;
};

Small small(uint64_t seed, Index n = 80, Index p = 8, Index m = 15) {
  Small s;
  Rng r(seed);
  s.X = r.normal_matrix(n, p);
  s.kb = KernelBasis::build(KernelSpec::ou(), Grid::uniform(m));
  s.Zh = s.X.leftCols(3) * r.normal_matrix(3, m) + 0.5 * r.normal_matrix(n, m);
  Vector B(m);
  for (Index j = 0; j < m; ++j) B(j) = std::sin(2 * M_PI * s.kb.grid.points(j, 0));
  s.Y = 2 * s.X.col(0) - 1.5 * s.X.col(5) + s.kb.delta() * s.Zh * B + 0.3 * r.normal_matrix(n, 1).col(0);
  return s;
}

// Dense solve of the stationarity system in (beta_A, alpha).
void dense_support(const Small& s, const std::vector<int>& A, double lambda, Vector& betaA, Vector& alpha) {
  const Index n = s.X.rows(), J = static_cast<Index>(A.size()), m = s.kb.m();
  Matrix XA = select_columns(s.X, A);
  Matrix G = s.kb.delta() * s.Zh * s.kb.sigma;
  // d/dbeta: XA'(XA b + G a - Y) = 0; d/dalpha: G'(XA b + G a - Y) + n lambda Sigma a = 0.
  Matrix H(J + m, J + m);
  H.topLeftCorner(J, J) = XA.transpose() * XA;
  H.topRightCorner(J, m) = XA.transpose() * G;
  H.bottomLeftCorner(m, J) = G.transpose() * XA;
  H.bottomRightCorner(m, m) = G.transpose() * G + n * lambda * s.kb.sigma;
  Vector rhs(J + m);
  rhs << XA.transpose() * s.Y, G.transpose() * s.Y;
  Vector sol = H.completeOrthogonalDecomposition().solve(rhs);
  betaA = sol.head(J);
  alpha = sol.tail(m);
}

}  // namespace

TEST(Support, MatchesDenseStationarity) {
  Small s = small(1);
  std::vector<int> A{0, 5};
  SupportSolution f = fit_b_given_support(s.Y, s.Zh, A, s.X, s.kb, 1e-2);
  Vector b, a;
  dense_support(s, A, 1e-2, b, a);
  EXPECT_LE((f.betaA - b).cwiseAbs().maxCoeff(), 1e-6);
  // Compare B = Sigma alpha; alpha itself is not unique when Sigma is near-singular.
  EXPECT_LE((f.B - s.kb.sigma * a).cwiseAbs().maxCoeff(), 1e-6 * std::max(1.0, f.B.cwiseAbs().maxCoeff()));
  EXPECT_LE((s.kb.sigma * f.alpha - f.B).cwiseAbs().maxCoeff(), 1e-8 * std::max(1.0, f.B.cwiseAbs().maxCoeff()));
}

TEST(Support, LargeLambdaIsOls) {
  Small s = small(2);
  std::vector<int> A{0, 5};
  SupportSolution f = fit_b_given_support(s.Y, s.Zh, A, s.X, s.kb, 1e8);
  Matrix XA = select_columns(s.X, A);
  Vector ols = XA.colPivHouseholderQr().solve(s.Y);
  EXPECT_LE((f.betaA - ols).cwiseAbs().maxCoeff(), 1e-4);
  EXPECT_LE(f.B.cwiseAbs().maxCoeff(), 1e-4);
}

TEST(Support, RepresentableSignalTinyLambda) {
  Small s = small(3);
  Vector alpha = Vector::Zero(s.kb.m());
  alpha(3) = 1.0;
  alpha(10) = -0.5;
  Vector Y = s.kb.delta() * s.Zh * (s.kb.sigma * alpha);
  SupportSolution f = fit_b_given_support(Y, s.Zh, {}, s.X, s.kb, 1e-8);
  Vector fitted = s.kb.delta() * s.Zh * f.B;
  EXPECT_LE((fitted - Y).squaredNorm() / Y.size(), 1e-4);
}

TEST(Support, ZeroOutcome) {
  Small s = small(4);
  SupportSolution f = fit_b_given_support(Vector::Zero(80), s.Zh, {1, 2}, s.X, s.kb, 1e-3);
  EXPECT_EQ(f.alpha.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(f.betaA.cwiseAbs().maxCoeff(), 0.0);
  OutcomeOptions o;
  o.J = 2;
  OutcomeFit g = outcome_fit(Vector::Zero(80), s.X, s.Zh, s.kb, o);
  EXPECT_EQ(g.beta.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(g.B.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(g.sigma2, 0.0);
}

TEST(Support, RankDeficientRejected) {
  Small s = small(5);
  Matrix X = s.X;
  X.col(2) = X.col(1);
  OutcomeDesign d(s.Y, X, s.Zh, s.kb);
  EXPECT_THROW(d.fit({1, 2}, 1e-3), NumericalError);
}

TEST(Sdar, RecoversSparseLinearModel) {
  Rng r(6);
  const Index n = 100, p = 10;
  Matrix X = r.normal_matrix(n, p);
  Vector Y = 3 * X.col(0) - 2 * X.col(3) + 1e-2 * r.normal_matrix(n, 1).col(0);
  KernelBasis kb = KernelBasis::build(KernelSpec::gaussian(0.2), Grid::uniform(12));
  OutcomeOptions o;
  o.J = 2;
  OutcomeFit f = outcome_fit(Y, X, Matrix::Zero(n, 12), kb, o);
  EXPECT_EQ(f.active_set, (std::vector<int>{0, 3}));
  EXPECT_NEAR(f.beta(0), 3, 0.01);
  EXPECT_NEAR(f.beta(3), -2, 0.01);
  EXPECT_TRUE(f.converged);
  EXPECT_EQ(f.B.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Sdar, MatchesExhaustiveL0WhenBVanishes) {
  // With lambda huge the B-part is negligible and SDAR should hit the best J-subset.
  for (uint64_t seed = 20; seed < 26; ++seed) {
    Rng r(seed);
    const Index n = 50, p = 7;
    Matrix X = r.normal_matrix(n, p);
    Vector Y = 2.5 * X.col(seed % p) + 1.5 * X.col((seed + 3) % p) + 0.5 * r.normal_matrix(n, 1).col(0);
    KernelBasis kb = KernelBasis::build(KernelSpec::gaussian(0.2), Grid::uniform(8));
    Matrix Zh = r.normal_matrix(n, 8);
    OutcomeOptions o;
    o.J = 2;
    o.lambda = 1e10;
    OutcomeFit f = outcome_fit(Y, X, Zh, kb, o);
    double best = std::numeric_limits<double>::infinity();
    std::vector<int> arg;
    for (int a = 0; a < p; ++a)
      for (int b = a + 1; b < p; ++b) {
        Matrix XA = select_columns(X, {a, b});
        double rss = (Y - XA * XA.colPivHouseholderQr().solve(Y)).squaredNorm();
        if (rss < best) {
          best = rss;
          arg = {a, b};
        }
      }
    EXPECT_EQ(f.active_set, arg) << seed;
  }
}

TEST(Sdar, BaselineIsSameFitOnObservedZ) {
  Small s = small(7);
  OutcomeOptions o;
  o.J = 3;
  OutcomeFit a = outcome_fit(s.Y, s.X, s.Zh, s.kb, o);
  OutcomeFit b = pflm_baseline_fit(s.Y, s.X, s.Zh, s.kb, o);
  EXPECT_EQ(a.active_set, b.active_set);
  EXPECT_EQ((a.beta - b.beta).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ((a.B - b.B).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(a.sigma2, b.sigma2);
}

TEST(Sdar, PrimalAndDualPathsAgree) {
  // rank > n takes the n x n path; checked against a dense solve.
  Rng r(8);
  const Index n = 30, p = 6, m = 60;
  Matrix X = r.normal_matrix(n, p);
  KernelBasis kb = KernelBasis::build(KernelSpec::gaussian(0.02), Grid::uniform(m));
  ASSERT_GT(kb.rank, n);
  Matrix Zh = r.normal_matrix(n, m);
  Vector Y = X.col(1) + 0.2 * r.normal_matrix(n, 1).col(0);
  OutcomeDesign d(Y, X, Zh, kb);
  auto f = d.fit({1, 4}, 1e-2, true);
  // Same problem solved densely in eta coordinates.
  Index rk = kb.rank;
  Matrix F = kb.delta() * (Zh * kb.U.leftCols(rk)) * kb.lam.head(rk).cwiseSqrt().asDiagonal();
  Matrix XA = select_columns(X, {1, 4});
  Matrix H(2 + rk, 2 + rk);
  H << XA.transpose() * XA, XA.transpose() * F, F.transpose() * XA, F.transpose() * F;
  H.bottomRightCorner(rk, rk).diagonal().array() += n * 1e-2;
  Vector rhs(2 + rk);
  rhs << XA.transpose() * Y, F.transpose() * Y;
  Vector sol = H.ldlt().solve(rhs);
  EXPECT_LE((f.betaA - sol.head(2)).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LE((f.eta - sol.tail(rk)).cwiseAbs().maxCoeff(), 1e-8);
  // Effective df from the hat matrix of the B-part.
  Matrix M = Projector(X, {1, 4}).dense(n);
  Matrix MF = M * F;
  Matrix hat = MF * (MF.transpose() * MF + n * 1e-2 * Matrix::Identity(rk, rk)).ldlt().solve(MF.transpose());
  EXPECT_NEAR(f.df_b, hat.trace(), 1e-8);
}

TEST(Hbic, SingleElementGrid) {
  Small s = small(9);
  OutcomeOptions o;
  auto sel = select_sparsity(s.Y, s.X, s.Zh, s.kb, {3}, o);
  EXPECT_EQ(sel.J, 3);
  EXPECT_EQ(sel.criterion.size(), 1u);
}

TEST(Hbic, PureNoiseFavorsSmallest) {
  Rng r(10);
  const Index n = 200, p = 20;
  Matrix X = r.normal_matrix(n, p);
  Vector Y = r.normal_matrix(n, 1).col(0);
  KernelBasis kb = KernelBasis::build(KernelSpec::gaussian(0.2), Grid::uniform(10));
  OutcomeOptions o;
  o.lambda = 1.0;
  auto sel = select_sparsity(Y, X, Matrix::Zero(n, 10), kb, {1, 2, 3, 4, 5, 6}, o);
  EXPECT_EQ(sel.J, 1);
}

TEST(Hbic, FormulaValue) {
  OutcomeFit f;
  f.sigma2 = 2.0;
  f.active_set = {0, 1, 2};
  double want = std::log(2.0) + 3 * std::log(20.0) * std::log(std::log(200.0)) / 200.0;
  EXPECT_NEAR(hbic(f, 200, 20), want, 1e-15);
}

TEST(Sigma2, ResidualAndDfCharged) {
  Small s = small(11);
  OutcomeOptions o;
  o.J = 2;
  OutcomeFit a = outcome_fit(s.Y, s.X, s.Zh, s.kb, o);
  EXPECT_NEAR(a.sigma2, a.rss / (80 - 2), 1e-14);
  o.sigma2 = Sigma2Mode::DfCharged;
  OutcomeFit b = outcome_fit(s.Y, s.X, s.Zh, s.kb, o);
  EXPECT_GT(b.df_b, 0);
  EXPECT_NEAR(b.sigma2, b.rss / (80 - 2 - b.df_b), 1e-12);
}

TEST(Outcome, DefaultLambda) {
  KernelBasis kb = KernelBasis::build(KernelSpec::gaussian(0.2), Grid::uniform(10));
  EXPECT_NEAR(default_outcome_lambda(kb), 1e-3, 1e-15);
}
