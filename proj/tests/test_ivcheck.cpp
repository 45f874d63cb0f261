#include <gtest/gtest.h>

#include <algorithm>

#include "flsem/ivcheck.hpp"

using namespace flsem;

static IvProblem example_i() {
  IvProblem p;
  p.gamma = (Vector(5) << 2, 3, 3, 8, 5).finished();
  p.cmat.resize(5, 2);
  p.cmat << 1, 1, 1, 2, 2, 1, 1, 1, 2, 3;
  p.U = 3;
  return p;
}

static IvProblem example_ii() {
  IvProblem p;
  p.gamma = (Vector(5) << 2, 3, 6, 8, 10).finished();
  p.cmat.resize(5, 2);
  p.cmat << 1, 1, 1, 2, 1, 3, 2, 2, 2, 3;
  p.U = 4;
  return p;
}

TEST(IvCheck, ExampleOneIdentifiable) {
  IvReport r = check_identifiability(example_i());
  ASSERT_TRUE(r.identifiable) << r.reason;
  EXPECT_NEAR(r.b(0), 1, 1e-10);
  EXPECT_NEAR(r.b(1), 1, 1e-10);
  Vector want = (Vector(5) << 0, 0, 0, 6, 0).finished();
  EXPECT_LE((r.beta - want).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_FALSE(r.consistent_subsets.empty());
}

TEST(IvCheck, ExampleTwoNotIdentifiable) {
  IvReport r = check_identifiability(example_ii());
  EXPECT_FALSE(r.identifiable);
  EXPECT_EQ(r.reason, "consistent subsets disagree on b");
  // Both {1,2} -> (1,1) and {4,5} -> (2,2) are found.
  bool a = false, b = false;
  for (const auto& cs : r.consistent_subsets) {
    if (cs.rows == std::vector<int>{0, 1}) a = std::abs(cs.b(0) - 1) < 1e-10 && std::abs(cs.b(1) - 1) < 1e-10;
    if (cs.rows == std::vector<int>{3, 4}) b = std::abs(cs.b(0) - 2) < 1e-10 && std::abs(cs.b(1) - 2) < 1e-10;
  }
  EXPECT_TRUE(a);
  EXPECT_TRUE(b);
}

TEST(IvCheck, ScalarProportional) {
  IvProblem p;
  p.gamma = (Vector(2) << 2, 4).finished();
  p.cmat = (Matrix(2, 1) << 1, 2).finished();
  p.U = 1;
  IvReport r = check_identifiability(p);
  ASSERT_TRUE(r.identifiable);
  EXPECT_NEAR(r.b(0), 2, 1e-12);
  EXPECT_EQ(r.beta.cwiseAbs().maxCoeff(), 0.0);
}

TEST(IvCheck, NoConsistentSubset) {
  IvProblem p;
  p.gamma = (Vector(3) << 1, 5, 2).finished();
  p.cmat = (Matrix(3, 1) << 1, 1, 1).finished();
  p.U = 1;  // all three must agree
  IvReport r = check_identifiability(p);
  EXPECT_FALSE(r.identifiable);
  EXPECT_EQ(r.reason, "no consistent full-rank subset");
}

TEST(IvCheck, Corollary) {
  EXPECT_EQ(corollary_max_invalid(5, 2), 2);
  EXPECT_EQ(corollary_max_invalid(3, 3), 0);
  EXPECT_EQ(corollary_max_invalid(10, 3), 4);
}

TEST(IvCheck, Validation) {
  IvProblem p = example_i();
  p.U = 5;  // subset size 1 < R
  EXPECT_THROW(check_identifiability(p), ValidationError);
  p = example_i();
  p.cmat.conservativeResize(4, 2);
  EXPECT_THROW(check_identifiability(p), ValidationError);
}

TEST(IvCheck, GuardExceeded) {
  IvProblem p;
  p.gamma = Vector::Ones(40);
  p.cmat = Matrix::Ones(40, 1);
  p.U = 20;  // C(40, 21) ~ 1.3e11
  EXPECT_THROW(check_identifiability(p), GuardExceeded);
  try {
    check_identifiability(p);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), 4);
  }
}

TEST(IvCheck, InvariantUnderRowPermutation) {
  IvProblem p = example_i();
  const int perm[5] = {4, 2, 0, 3, 1};
  IvProblem q = p;
  for (int i = 0; i < 5; ++i) {
    q.gamma(i) = p.gamma(perm[i]);
    q.cmat.row(i) = p.cmat.row(perm[i]);
  }
  IvReport r = check_identifiability(q);
  ASSERT_TRUE(r.identifiable);
  EXPECT_NEAR(r.b(0), 1, 1e-10);
  for (int i = 0; i < 5; ++i) EXPECT_NEAR(r.beta(i), perm[i] == 3 ? 6.0 : 0.0, 1e-10);
}

TEST(IvCheck, ColumnScalingRescalesB) {
  IvProblem p = example_i();
  p.cmat.col(1) *= 4.0;
  IvReport r = check_identifiability(p);
  ASSERT_TRUE(r.identifiable);
  EXPECT_NEAR(r.b(0), 1, 1e-10);
  EXPECT_NEAR(r.b(1), 0.25, 1e-10);
}

TEST(IvCheck, RandomConstructionsWithinCorollary) {
  // Invalid count up to the corollary bound with generic loadings: identifiable and exact.
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const int L = 7, R = 2;
    const int s = corollary_max_invalid(L, R);  // 3
    IvProblem p;
    p.cmat = rng.normal_matrix(L, R);
    Vector b = rng.normal_matrix(R, 1).col(0);
    Vector beta = Vector::Zero(L);
    for (int k = 0; k < s; ++k) beta((trial + 2 * k) % L) = 3.0 + rng.uniform();
    p.gamma = beta + p.cmat * b;
    p.U = s + 1;
    IvReport r = check_identifiability(p);
    ASSERT_TRUE(r.identifiable) << trial << " " << r.reason;
    EXPECT_LE((r.b - b).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LE((r.beta - beta).cwiseAbs().maxCoeff(), 1e-8);
  }
}
