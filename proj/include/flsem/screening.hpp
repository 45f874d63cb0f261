#pragma once

// Marginal screening: Pearson correlation against the outcome and distance
// correlation against the functional exposure.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "flsem/numerics.hpp"

namespace flsem {

// Indices of the k largest scores, descending; ties go to the smaller index.
inline std::vector<int> top_k(const Vector& score, int k) {
  std::vector<int> idx(static_cast<size_t>(score.size()));
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return score(a) > score(b); });
  idx.resize(static_cast<size_t>(k));
  return idx;
}

inline Vector sis_scores(const Vector& Y, const Matrix& X) {
  require(Y.size() == X.rows(), "sis: Y and X row counts differ");
  const double n = static_cast<double>(Y.size());
  Vector yc = Y.array() - Y.mean();
  double ysd = std::sqrt(yc.squaredNorm() / n);
  Vector s = Vector::Zero(X.cols());
  if (ysd <= 0) return s;
  for (Index l = 0; l < X.cols(); ++l) {
    Vector xc = X.col(l).array() - X.col(l).mean();
    double xsd = std::sqrt(xc.squaredNorm() / n);
    if (xsd <= 0) continue;
    s(l) = std::abs(xc.dot(yc) / (n * xsd * ysd));
  }
  return s;
}

inline std::vector<int> sis_rank(const Vector& Y, const Matrix& X, int k) {
  require(k >= 0 && k <= X.cols(), "sis_rank: need 0 <= k <= p");
  return top_k(sis_scores(Y, X), k);
}

// Above this many rows, distance correlation uses an evenly spaced subsample.
inline constexpr Index kDcorMaxRows = 5000;

inline std::vector<Index> dcor_rows(Index n) {
  std::vector<Index> rows;
  if (n <= kDcorMaxRows) {
    rows.resize(static_cast<size_t>(n));
    std::iota(rows.begin(), rows.end(), Index{0});
  } else {
    for (Index i = 0; i < kDcorMaxRows; ++i) rows.push_back(i * n / kDcorMaxRows);
  }
  return rows;
}

// Double-centered Euclidean distance matrix of the rows of v.
inline Matrix centered_distance(const Matrix& v) {
  const Index n = v.rows();
  Matrix D(n, n);
  if (v.cols() == 1) {
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j) D(i, j) = std::abs(v(i, 0) - v(j, 0));
  } else {
    Vector sq = v.rowwise().squaredNorm();
    D = (-2.0 * v * v.transpose()).colwise() + sq;
    D.rowwise() += sq.transpose();
    D = D.cwiseMax(0.0).cwiseSqrt();
    D.diagonal().setZero();
  }
  Vector rm = D.rowwise().mean();
  double gm = rm.mean();
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) D(i, j) += gm - rm(i) - rm(j);
  return D;
}

inline double dcor_from_centered(const Matrix& A, const Matrix& B) {
  double ab = (A.array() * B.array()).mean();
  double aa = A.squaredNorm() / static_cast<double>(A.size());
  double bb = B.squaredNorm() / static_cast<double>(B.size());
  double den = std::sqrt(aa * bb);
  if (!(den > 1e-300)) return 0.0;
  double r2 = std::max(0.0, ab) / den;
  return std::min(1.0, std::sqrt(r2));
}

inline Matrix take_rows(const Matrix& v, const std::vector<Index>& rows) {
  Matrix out(static_cast<Index>(rows.size()), v.cols());
  for (size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = v.row(rows[i]);
  return out;
}

// Sample distance correlation (V-statistic form) in [0, 1].
inline double dcor(const Matrix& u, const Matrix& v) {
  require(u.rows() == v.rows(), "dcor: row counts differ");
  require(u.rows() >= 4, "dcor: need n >= 4");
  auto rows = dcor_rows(u.rows());
  return dcor_from_centered(centered_distance(take_rows(u, rows)), centered_distance(take_rows(v, rows)));
}

inline Vector dcor_scores(const Matrix& Z, const Matrix& X) {
  require(Z.rows() == X.rows(), "dcor screen: row counts differ");
  require(Z.rows() >= 4, "dcor: need n >= 4");
  auto rows = dcor_rows(Z.rows());
  Matrix A = centered_distance(take_rows(Z, rows));
  Matrix Xs = take_rows(X, rows);
  Vector s(X.cols());
  for (Index l = 0; l < X.cols(); ++l) s(l) = dcor_from_centered(centered_distance(Xs.col(l)), A);
  return s;
}

inline std::vector<int> dcor_screen_functional(const Matrix& Z, const Matrix& X, int k) {
  require(k >= 0 && k <= X.cols(), "dcor_screen_functional: need 0 <= k <= p");
  return top_k(dcor_scores(Z, X), k);
}

inline std::vector<int> union_screen(std::vector<int> a, const std::vector<int>& b) {
  a.insert(a.end(), b.begin(), b.end());
  std::sort(a.begin(), a.end());
  a.erase(std::unique(a.begin(), a.end()), a.end());
  return a;
}

// Default per-channel screening size floor(n / log n).
inline int default_screen_size(Index n, Index p) {
  int k = n > 1 ? static_cast<int>(std::floor(static_cast<double>(n) / std::log(static_cast<double>(n)))) : 1;
  return static_cast<int>(std::min<Index>(std::max(k, 1), p));
}

}  // namespace flsem
