#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "flsem/numerics.hpp"
#include "flsem/screening.hpp"

using namespace flsem;

TEST(Sis, PicksTheSignal) {
  Rng r(3);
  Matrix X = r.normal_matrix(100, 4);
  Vector Y = 5 * X.col(0) + 0.01 * r.normal_matrix(100, 1).col(0);
  auto s = sis_rank(Y, X, 1);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s[0], 0);
}

TEST(Sis, KEqualsPIsPermutation) {
  Rng r(4);
  Matrix X = r.normal_matrix(30, 6);
  Vector Y = r.normal_matrix(30, 1).col(0);
  auto s = sis_rank(Y, X, 6);
  std::sort(s.begin(), s.end());
  std::vector<int> all(6);
  std::iota(all.begin(), all.end(), 0);
  EXPECT_EQ(s, all);
}

TEST(Sis, ConstantInputs) {
  Rng r(5);
  Matrix X = r.normal_matrix(20, 5);
  Vector Y = Vector::Constant(20, 2.0);
  EXPECT_EQ(sis_scores(Y, X).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(sis_rank(Y, X, 3), (std::vector<int>{0, 1, 2}));
  X.col(2).setConstant(1.0);
  Vector Y2 = X.col(0);
  EXPECT_EQ(sis_scores(Y2, X)(2), 0.0);
}

TEST(Dcor, SelfAndAffine) {
  Rng r(6);
  Matrix x = r.normal_matrix(200, 1);
  EXPECT_NEAR(dcor(x, x), 1.0, 1e-12);
  Matrix y = (2 * x.array() + 3).matrix();
  EXPECT_NEAR(dcor(x, y), 1.0, 1e-12);
  Matrix v = r.normal_matrix(200, 3);
  EXPECT_NEAR(dcor(v, v), 1.0, 1e-12);
}

TEST(Dcor, IndependentIsSmall) {
  Rng r(7);
  Matrix x = r.normal_matrix(1000, 1), y = r.normal_matrix(1000, 1);
  EXPECT_LT(dcor(x, y), 0.1);
}

TEST(Dcor, ZeroVariance) {
  Rng r(8);
  Matrix x = r.normal_matrix(50, 1);
  EXPECT_EQ(dcor(x, Matrix::Zero(50, 1)), 0.0);
}

// Direct O(n^2) V-statistic on 1-D samples.
static double dcor_direct(const Vector& x, const Vector& y) {
  const Index n = x.size();
  auto centered = [n](const Vector& v) {
    Matrix a(n, n);
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j) a(i, j) = std::abs(v(i) - v(j));
    Vector rm = a.rowwise().mean(), cm = a.colwise().mean().transpose();
    double g = a.mean();
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j) a(i, j) = a(i, j) - rm(i) - cm(j) + g;
    return a;
  };
  Matrix A = centered(x), B = centered(y);
  double xy = (A.array() * B.array()).sum(), xx = A.squaredNorm(), yy = B.squaredNorm();
  return std::sqrt(xy / std::sqrt(xx * yy));
}

TEST(Dcor, MatchesDirectFormula) {
  Rng r(9);
  Matrix x = r.normal_matrix(60, 1);
  Matrix y = (x.array().square() + 0.3 * r.normal_matrix(60, 1).array()).matrix();
  EXPECT_NEAR(dcor(x, y), dcor_direct(x.col(0), y.col(0)), 1e-12);
}

TEST(DcorScreen, ExactFunctionalSignal) {
  Rng r(10);
  const Index n = 80, m = 15, p = 6;
  Matrix X = r.normal_matrix(n, p);
  Vector C(m);
  for (Index j = 0; j < m; ++j) C(j) = 2.0 * std::pow((j + 0.5) / m, 2);
  Matrix Z = X.col(0) * C.transpose();
  auto s = dcor_screen_functional(Z, X, 1);
  EXPECT_EQ(s, std::vector<int>{0});
  auto all = dcor_screen_functional(Z, X, static_cast<int>(p));
  std::sort(all.begin(), all.end());
  EXPECT_EQ(all.size(), static_cast<size_t>(p));
  EXPECT_EQ(all.back(), p - 1);
}

TEST(DcorScreen, ZeroExposure) {
  Rng r(11);
  Matrix X = r.normal_matrix(30, 5);
  Matrix Z = Matrix::Zero(30, 7);
  EXPECT_EQ(dcor_scores(Z, X).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(dcor_screen_functional(Z, X, 3), (std::vector<int>{0, 1, 2}));
}

TEST(DcorScreen, SubsampleAboveCap) {
  auto rows = dcor_rows(12000);
  EXPECT_EQ(rows.size(), static_cast<size_t>(kDcorMaxRows));
  EXPECT_EQ(rows.front(), 0);
  EXPECT_LT(rows.back(), 12000);
  EXPECT_TRUE(std::is_sorted(rows.begin(), rows.end()));
}

TEST(Union, Examples) {
  EXPECT_EQ(union_screen({0, 2}, {2, 4}), (std::vector<int>{0, 2, 4}));
  EXPECT_EQ(union_screen({}, {1}), (std::vector<int>{1}));
  EXPECT_EQ(union_screen({0, 1, 2}, {0, 1, 2}), (std::vector<int>{0, 1, 2}));
}

TEST(Union, DefaultSize) {
  EXPECT_EQ(default_screen_size(200, 500), 37);
  EXPECT_EQ(default_screen_size(200, 20), 20);
}
