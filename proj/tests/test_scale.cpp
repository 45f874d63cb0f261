#include <gtest/gtest.h>

#include "flsem/datagen.hpp"
#include "flsem/scale.hpp"

using namespace flsem;

TEST(Windows, Intervals) {
  auto w = window_intervals(0.5, 0.25);
  ASSERT_EQ(w.size(), 3u);
  EXPECT_DOUBLE_EQ(w[0].first, 0.0);
  EXPECT_DOUBLE_EQ(w[1].first, 0.25);
  EXPECT_DOUBLE_EQ(w[2].first, 0.5);
  EXPECT_DOUBLE_EQ(w[2].second, 1.0);
  auto one = window_intervals(1.0, 0.3);
  ASSERT_EQ(one.size(), 1u);
  auto t = window_intervals(2.0 / 3, 1.0 / 3);
  EXPECT_EQ(t.size(), 2u);
  EXPECT_THROW(window_intervals(0.5, 0.6), ValidationError);
  EXPECT_THROW(window_intervals(1.5, 0.5), ValidationError);
}

TEST(Windows, WholeDomainAndCoverage) {
  Grid g = Grid::uniform(20);
  WindowPlan p = make_windows(g, 1.0, 1.0);
  ASSERT_EQ(p.windows.size(), 1u);
  EXPECT_EQ(p.windows[0].size(), 20u);
  WindowPlan q = make_windows(g, 0.3, 0.2);
  std::vector<int> hits(20, 0);
  for (const auto& w : q.windows)
    for (int j : w) ++hits[static_cast<size_t>(j)];
  for (int h : hits) EXPECT_GE(h, 1);
}

TEST(Windows, TwoDimensionalTiling) {
  Grid g = Grid::uniform2d(6, 9);
  WindowPlan p = make_windows(g, 2.0 / 3, 1.0 / 3);
  ASSERT_EQ(p.windows.size(), 4u);
  std::vector<int> hits(54, 0);
  for (const auto& w : p.windows)
    for (int j : w) ++hits[static_cast<size_t>(j)];
  // Centre points fall in all four windows, corners in one.
  EXPECT_EQ(hits[0], 1);
  int centre = 2 * 9 + 4;  // (5/12, 1/2)
  EXPECT_EQ(hits[static_cast<size_t>(centre)], 4);
}

TEST(Partition, ContiguousWithRemainder) {
  PartitionPlan p = make_partition(11, 3);
  ASSERT_EQ(p.rows.size(), 3u);
  EXPECT_EQ(p.rows[0].size(), 3u);
  EXPECT_EQ(p.rows[1].front(), 3);
  EXPECT_EQ(p.rows[2].size(), 5u);
  EXPECT_EQ(p.rows[2].back(), 10);
  EXPECT_THROW(make_partition(3, 4), ValidationError);
}

namespace {
FunctionalDataset data(int n, uint64_t seed) {
  SimConfig c;
  c.n = n;
  c.m = 40;
  c.seed = seed;
  return generate(c);
}
}  // namespace

TEST(DcExposure, DegenerateEqualsDirectFit) {
  auto ds = data(120, 1);
  KernelBasis kb = KernelBasis::build(KernelSpec::gaussian(0.003), ds.grid);
  ExposureOptions o;
  o.J = 6;
  ExposureFit f = fgsdar_fit(ds.X, ds.Z, kb, o);
  DcExposureResult d = dc_exposure_fit(ds.X, ds.Z, kb, o, make_partition(120, 1), make_windows(ds.grid, 1, 1));
  EXPECT_EQ((d.values - f.values).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(d.active_set, f.active_set);
  EXPECT_EQ((d.zhat - predict_zhat(f, ds.X)).cwiseAbs().maxCoeff(), 0.0);
}

TEST(DcExposure, OverlapIsMeanOfWindows) {
  auto ds = data(100, 2);
  KernelBasis kb = KernelBasis::build(KernelSpec::ou(), ds.grid);
  ExposureOptions o;
  o.J = 5;
  WindowPlan plan = make_windows(ds.grid, 0.6, 0.4);
  ASSERT_EQ(plan.windows.size(), 2u);
  DcExposureResult d = dc_exposure_fit(ds.X, ds.Z, kb, o, make_partition(100, 1), plan);
  std::vector<Matrix> win;
  for (const auto& w : plan.windows)
    win.push_back(fgsdar_fit(ds.X, take_cols(ds.Z, w), kb.restrict_to(w), o).values);
  int checked = 0;
  for (size_t a = 0; a < plan.windows[0].size(); ++a)
    for (size_t b = 0; b < plan.windows[1].size(); ++b)
      if (plan.windows[0][a] == plan.windows[1][b]) {
        Vector want = 0.5 * (win[0].col(static_cast<Index>(a)) + win[1].col(static_cast<Index>(b)));
        EXPECT_LE((d.values.col(plan.windows[0][a]) - want).cwiseAbs().maxCoeff(), 1e-12);
        ++checked;
      }
  EXPECT_GT(checked, 0);
  // Outside the overlap, the single covering window.
  EXPECT_LE((d.values.col(0) - win[0].col(0)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(DcExposure, BlockAverage) {
  auto ds = data(100, 3);
  KernelBasis kb = KernelBasis::build(KernelSpec::gaussian(0.003), ds.grid);
  ExposureOptions o;
  o.J = 5;
  auto part = make_partition(100, 2);
  DcExposureResult d = dc_exposure_fit(ds.X, ds.Z, kb, o, part, make_windows(ds.grid, 1, 1));
  Matrix a = fgsdar_fit(take_rows(ds.X, part.rows[0]), take_rows(ds.Z, part.rows[0]), kb, o).values;
  Matrix b = fgsdar_fit(take_rows(ds.X, part.rows[1]), take_rows(ds.Z, part.rows[1]), kb, o).values;
  EXPECT_LE((d.values - 0.5 * (a + b)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_EQ(d.lambdas.size(), 2u);
}

TEST(DcOutcome, SingleBlockIsDirect) {
  auto ds = data(120, 4);
  KernelBasis kb = KernelBasis::build(KernelSpec::gaussian(0.003), ds.grid);
  OutcomeOptions o;
  o.J = 6;
  OutcomeFit a = outcome_fit(ds.Y, ds.X, ds.Z, kb, o);
  OutcomeFit b = dc_outcome_fit(ds.Y, ds.X, ds.Z, kb, o, {}, make_partition(120, 1));
  EXPECT_EQ((a.beta - b.beta).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ((a.B - b.B).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(a.sigma2, b.sigma2);
}

TEST(DcOutcome, IdenticalBlocksAverageToThatFit) {
  auto ds = data(60, 5);
  KernelBasis kb = KernelBasis::build(KernelSpec::gaussian(0.003), ds.grid);
  Matrix X(120, ds.p()), Z(120, ds.m());
  Vector Y(120);
  X << ds.X, ds.X;
  Z << ds.Z, ds.Z;
  Y << ds.Y, ds.Y;
  OutcomeOptions o;
  o.J = 6;
  OutcomeFit a = outcome_fit(ds.Y, ds.X, ds.Z, kb, o);
  OutcomeFit b = dc_outcome_fit(Y, X, Z, kb, o, {}, make_partition(120, 2));
  EXPECT_EQ((a.beta - b.beta).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ((a.B - b.B).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(a.active_set, b.active_set);
}

TEST(DcOutcome, BlockTooSmall) {
  auto ds = data(20, 6);
  KernelBasis kb = KernelBasis::build(KernelSpec::gaussian(0.003), ds.grid);
  OutcomeOptions o;
  o.J = 8;
  EXPECT_THROW(dc_outcome_fit(ds.Y, ds.X, ds.Z, kb, o, {}, make_partition(20, 4)), ValidationError);
}
