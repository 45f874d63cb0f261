#pragma once

// Identifiability of the reduced-form decomposition Gamma = beta + Cmat * b
// when at most U - 1 instruments are invalid (beta_l != 0).

#include <cmath>
#include <string>
#include <vector>

#include "flsem/numerics.hpp"

namespace flsem {

struct IvProblem {
  Vector gamma;  // L
  Matrix cmat;   // L x R
  int U = 1;
  double rank_tol = 1e-8;

  Index L() const { return gamma.size(); }
  Index R() const { return cmat.cols(); }

  void validate() const {
    require(cmat.rows() == gamma.size(), "loadings rows must equal length of gamma");
    require(R() >= 1, "need R >= 1");
    require(U >= 1, "need U >= 1");
    require(rank_tol > 0, "rank_tol must be positive");
    require(gamma.allFinite() && cmat.allFinite(), "non-finite IV inputs");
    require(L() - U + 1 >= R(), "subset size L - U + 1 must be at least R");
  }
};

struct ConsistentSubset {
  std::vector<int> rows;
  Vector b;
};

struct IvReport {
  bool identifiable = false;
  Vector b;
  Vector beta;
  std::vector<ConsistentSubset> consistent_subsets;
  std::string reason;
};

inline constexpr double kIvMaxSubsets = 1e6;

inline double binomial(Index n, Index k) {
  if (k < 0 || k > n) return 0;
  double r = 1;
  for (Index i = 1; i <= k; ++i) r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
  return r;
}

inline int corollary_max_invalid(int L, int R) {
  require(R >= 1 && L >= R, "corollary_max_invalid: need L >= R >= 1");
  return (L - R + 1) / 2;
}

inline IvReport check_identifiability(const IvProblem& prob) {
  prob.validate();
  const Index L = prob.L(), R = prob.R(), s = L - prob.U + 1;
  if (binomial(L, s) > kIvMaxSubsets)
    throw GuardExceeded("IV subset enumeration exceeds 1e6 subsets");

  IvReport rep;
  std::vector<int> S(static_cast<size_t>(s));
  for (Index i = 0; i < s; ++i) S[static_cast<size_t>(i)] = static_cast<int>(i);
  while (true) {
    Matrix Cs(s, R);
    Vector gs(s);
    for (Index i = 0; i < s; ++i) {
      Cs.row(i) = prob.cmat.row(S[static_cast<size_t>(i)]);
      gs(i) = prob.gamma(S[static_cast<size_t>(i)]);
    }
    Eigen::JacobiSVD<Matrix> svd(Cs, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector& sv = svd.singularValues();
    if (sv(0) > 0 && sv(R - 1) >= prob.rank_tol * sv(0)) {
      Vector b = svd.solve(gs);
      double resid = (Cs * b - gs).norm();
      if (resid <= prob.rank_tol * (1.0 + gs.norm())) rep.consistent_subsets.push_back({S, b});
    }
    // next combination in lexicographic order
    Index i = s - 1;
    while (i >= 0 && S[static_cast<size_t>(i)] == L - s + i) --i;
    if (i < 0) break;
    ++S[static_cast<size_t>(i)];
    for (Index j = i + 1; j < s; ++j) S[static_cast<size_t>(j)] = S[static_cast<size_t>(j - 1)] + 1;
  }

  if (rep.consistent_subsets.empty()) {
    rep.reason = "no consistent full-rank subset";
    return rep;
  }
  const Vector& b0 = rep.consistent_subsets.front().b;
  for (const auto& cs : rep.consistent_subsets) {
    for (Index k = 0; k < R; ++k) {
      if (std::abs(cs.b(k) - b0(k)) > prob.rank_tol * std::max(1.0, std::abs(b0(k)))) {
        rep.reason = "consistent subsets disagree on b";
        return rep;
      }
    }
  }
  rep.identifiable = true;
  rep.b = b0;
  rep.beta = prob.gamma - prob.cmat * b0;
  double tol = prob.rank_tol * (1.0 + prob.gamma.cwiseAbs().maxCoeff());
  for (Index l = 0; l < L; ++l)
    if (std::abs(rep.beta(l)) <= tol) rep.beta(l) = 0.0;
  rep.reason = "all consistent subsets agree";
  return rep;
}

}  // namespace flsem
