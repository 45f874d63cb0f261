#pragma once

// Evaluation quantities for simulation studies.

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "flsem/numerics.hpp"

namespace flsem {

struct SelectionErrors {
  int fz = 0;  // false zeros |true \ est|
  int fn = 0;  // false nonzeros |est \ true|
};

inline SelectionErrors selection_errors(std::vector<int> truth, std::vector<int> est) {
  std::sort(truth.begin(), truth.end());
  std::sort(est.begin(), est.end());
  truth.erase(std::unique(truth.begin(), truth.end()), truth.end());
  est.erase(std::unique(est.begin(), est.end()), est.end());
  SelectionErrors e;
  for (int t : truth)
    if (!std::binary_search(est.begin(), est.end(), t)) ++e.fz;
  for (int s : est)
    if (!std::binary_search(truth.begin(), truth.end(), s)) ++e.fn;
  return e;
}

inline double mse_beta(const Vector& est, const Vector& truth) {
  require(est.size() == truth.size(), "beta lengths differ");
  return (est - truth).squaredNorm();
}

// Delta * sum_j (f(t_j) - g(t_j))^2.
inline double mse_function(const Vector& est, const Vector& truth, double delta) {
  require(est.size() == truth.size(), "function lengths differ");
  return delta * (est - truth).squaredNorm();
}

inline double mse_B(const Vector& est, const Vector& truth, double delta) { return mse_function(est, truth, delta); }

// Mean squared prediction error of scalar predictions.
inline double pmse(const Vector& pred, const Vector& y) {
  require(pred.size() == y.size() && y.size() > 0, "prediction lengths differ");
  return (pred - y).squaredNorm() / static_cast<double>(y.size());
}

// Mean over subjects of the Delta-weighted squared curve error.
inline double pmse_curves(const Matrix& pred, const Matrix& Z, double delta) {
  require(pred.rows() == Z.rows() && pred.cols() == Z.cols() && Z.rows() > 0, "curve shapes differ");
  return delta * (pred - Z).squaredNorm() / static_cast<double>(Z.rows());
}

struct Aggregate {
  double mean = 0;
  double sd = 0;
  int count = 0;
  bool sd_defined = false;
};

inline Aggregate mc_aggregate(const std::vector<double>& v) {
  Aggregate a;
  a.count = static_cast<int>(v.size());
  if (v.empty()) return a;
  std::vector<double> s = v;
  std::sort(s.begin(), s.end());  // order-independent summation
  double sum = 0;
  for (double x : s) sum += x;
  a.mean = sum / static_cast<double>(s.size());
  if (s.size() < 2) return a;
  double ss = 0;
  for (double x : s) ss += (x - a.mean) * (x - a.mean);
  a.sd = std::sqrt(ss / static_cast<double>(s.size() - 1));
  a.sd_defined = true;
  return a;
}

}  // namespace flsem
