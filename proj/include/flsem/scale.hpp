#pragma once

// Divide-and-conquer over subjects and overlapping windows over the domain.

#include <algorithm>
#include <cmath>
#include <vector>

#include "flsem/exposure.hpp"
#include "flsem/outcome.hpp"

namespace flsem {

struct WindowPlan {
  std::vector<std::vector<int>> windows;  // grid indices per window
  double width = 1;
  double stride = 1;
};

struct PartitionPlan {
  int blocks = 1;
  std::vector<std::vector<Index>> rows;
};

// Window starts 0, stride, 2 stride, ... on [0,1] until a window reaches 1.
inline std::vector<std::pair<double, double>> window_intervals(double width, double stride) {
  require(width > 0 && width <= 1.0 + 1e-12, "window width must be in (0, 1]");
  require(stride > 0 && stride <= width + 1e-12, "window stride must be in (0, width]");
  std::vector<std::pair<double, double>> out;
  for (int k = 0;; ++k) {
    double a = k * stride;
    double b = std::min(1.0, a + width);
    out.emplace_back(a, b);
    if (a + width >= 1.0 - 1e-12) break;
  }
  return out;
}

// 1-D grids: intervals on [0,1]. 2-D grids: products of intervals per axis.
inline WindowPlan make_windows(const Grid& grid, double width, double stride) {
  auto iv = window_intervals(width, stride);
  const double eps = 1e-12;
  auto inside = [&](double t, const std::pair<double, double>& w) {
    return t >= w.first - eps && t <= w.second + eps;
  };
  WindowPlan plan;
  plan.width = width;
  plan.stride = stride;
  if (grid.dim() == 1) {
    for (const auto& w : iv) {
      std::vector<int> idx;
      for (Index j = 0; j < grid.size(); ++j)
        if (inside(grid.points(j, 0), w)) idx.push_back(static_cast<int>(j));
      if (!idx.empty()) plan.windows.push_back(std::move(idx));
    }
  } else {
    for (const auto& w1 : iv)
      for (const auto& w2 : iv) {
        std::vector<int> idx;
        for (Index j = 0; j < grid.size(); ++j)
          if (inside(grid.points(j, 0), w1) && inside(grid.points(j, 1), w2)) idx.push_back(static_cast<int>(j));
        if (!idx.empty()) plan.windows.push_back(std::move(idx));
      }
  }
  std::vector<char> hit(static_cast<size_t>(grid.size()), 0);
  for (const auto& w : plan.windows)
    for (int j : w) hit[static_cast<size_t>(j)] = 1;
  for (char h : hit) require(h, "window plan leaves a grid point uncovered");
  return plan;
}

// Contiguous blocks of n / blocks rows; the remainder goes to the last block.
inline PartitionPlan make_partition(Index n, int blocks) {
  require(blocks >= 1 && blocks <= n, "need 1 <= blocks <= n");
  PartitionPlan p;
  p.blocks = blocks;
  Index size = n / blocks;
  for (int b = 0; b < blocks; ++b) {
    Index lo = b * size, hi = (b == blocks - 1) ? n : lo + size;
    std::vector<Index> r;
    for (Index i = lo; i < hi; ++i) r.push_back(i);
    p.rows.push_back(std::move(r));
  }
  return p;
}

inline Vector take_rows(const Vector& v, const std::vector<Index>& rows) {
  Vector out(static_cast<Index>(rows.size()));
  for (size_t i = 0; i < rows.size(); ++i) out(static_cast<Index>(i)) = v(rows[i]);
  return out;
}

inline Matrix take_cols(const Matrix& M, const std::vector<int>& cols) { return select_columns(M, cols); }

struct DcExposureResult {
  Matrix values;                // p x m averaged coefficient functions on the grid
  Matrix zhat;                  // n x m
  std::vector<int> active_set;  // union of nonzero averaged rows
  std::vector<double> lambdas;  // lambda_K used per (block, window), block-major
};

// Local fits per (block, window); window surfaces are block averages and
// overlapping grid points take the mean over covering windows.
inline DcExposureResult dc_exposure_fit(const Matrix& X, const Matrix& Z, const KernelBasis& kb,
                                        const ExposureOptions& opt, const PartitionPlan& part,
                                        const WindowPlan& plan) {
  require(X.rows() == Z.rows(), "X and Z row counts differ");
  for (const auto& r : part.rows)
    require(static_cast<int>(r.size()) >= opt.J + 1, "block too small: need at least J + 1 subjects");
  const Index p = X.cols(), m = Z.cols();
  DcExposureResult out;
  out.values = Matrix::Zero(p, m);
  Vector cover = Vector::Zero(m);
  const bool whole = plan.windows.size() == 1 && static_cast<Index>(plan.windows[0].size()) == m;
  for (const auto& win : plan.windows) {
    KernelBasis local = whole ? kb : kb.restrict_to(win);
    Matrix avg = Matrix::Zero(p, static_cast<Index>(win.size()));
    for (const auto& rows : part.rows) {
      Matrix Xb = part.blocks == 1 ? X : take_rows(X, rows);
      Matrix Zb = whole ? (part.blocks == 1 ? Z : take_rows(Z, rows)) : take_cols(take_rows(Z, rows), win);
      ExposureFit f = fgsdar_fit(Xb, Zb, local, opt);
      out.lambdas.push_back(f.lambda_k);
      if (part.blocks == 1) avg = f.values;
      else avg += f.values / static_cast<double>(part.blocks);
    }
    for (size_t a = 0; a < win.size(); ++a) {
      out.values.col(win[a]) += avg.col(static_cast<Index>(a));
      cover(win[a]) += 1;
    }
  }
  for (Index j = 0; j < m; ++j) out.values.col(j) /= cover(j);
  for (Index l = 0; l < p; ++l)
    if (out.values.row(l).cwiseAbs().maxCoeff() > 0) out.active_set.push_back(static_cast<int>(l));
  out.zhat = X * out.values;
  return out;
}

// Per-block outcome fits (fixed J_y or HBIC over J_grid) averaged across blocks.
inline OutcomeFit dc_outcome_fit(const Vector& Y, const Matrix& X, const Matrix& Zhat, const KernelBasis& kb,
                                 const OutcomeOptions& opt, const std::vector<int>& J_grid,
                                 const PartitionPlan& part) {
  int need = J_grid.empty() ? opt.J : *std::max_element(J_grid.begin(), J_grid.end());
  for (const auto& r : part.rows)
    require(static_cast<int>(r.size()) >= need + 1, "block too small: need at least J_y + 1 subjects");
  auto fit_block = [&](const Vector& Yb, const Matrix& Xb, const Matrix& Zb) {
    OutcomeDesign d(Yb, Xb, Zb, kb);
    if (J_grid.empty()) return outcome_fit(d, opt);
    return select_sparsity(d, J_grid, opt).fit;
  };
  if (part.blocks == 1) return fit_block(Y, X, Zhat);

  const Index p = X.cols(), m = Zhat.cols();
  OutcomeFit avg;
  avg.beta = Vector::Zero(p);
  avg.alpha = Vector::Zero(m);
  avg.B = Vector::Zero(m);
  avg.lambda = opt.lambda;
  avg.converged = true;
  const double w = 1.0 / part.blocks;
  for (const auto& rows : part.rows) {
    OutcomeFit f = fit_block(take_rows(Y, rows), take_rows(X, rows), take_rows(Zhat, rows));
    avg.beta += w * f.beta;
    avg.alpha += w * f.alpha;
    avg.B += w * f.B;
    avg.iterations = std::max(avg.iterations, f.iterations);
    avg.converged = avg.converged && f.converged;
    avg.df_b += w * f.df_b;
  }
  for (Index l = 0; l < p; ++l)
    if (avg.beta(l) != 0) avg.active_set.push_back(static_cast<int>(l));
  Vector resid = Y - X * avg.beta - kb.delta() * (Zhat * avg.B);
  avg.rss = resid.squaredNorm();
  const double n = static_cast<double>(Y.size());
  double dof = n - static_cast<double>(avg.active_set.size());
  if (opt.sigma2 == Sigma2Mode::DfCharged) dof -= avg.df_b;
  require(dof > 0, "no residual degrees of freedom for sigma^2");
  avg.sigma2 = avg.rss / dof;
  avg.loss = avg.rss / (2 * n) + 0.5 * opt.lambda * avg.alpha.dot(kb.sigma * avg.alpha);
  return avg;
}

}  // namespace flsem
