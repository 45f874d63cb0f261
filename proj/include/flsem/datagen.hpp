#pragma once

// Simulation designs: scalar covariates X, functional exposure Z on a grid,
// scalar outcome Y, and the ground truth used by the metrics.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "flsem/numerics.hpp"

namespace flsem {

enum class Design { Example1, Example2, Example4 };

inline std::string to_string(Design d) {
  switch (d) {
    case Design::Example1: return "example1_1d";
    case Design::Example2: return "example2_2d";
    case Design::Example4: return "example4_power";
  }
  return "?";
}

inline Design parse_design(const std::string& s) {
  if (s == "example1_1d" || s == "example1" || s == "1") return Design::Example1;
  if (s == "example2_2d" || s == "example2" || s == "2") return Design::Example2;
  if (s == "example4_power" || s == "example4" || s == "4") return Design::Example4;
  throw ValidationError("unknown design '" + s + "'");
}

struct SimConfig {
  Design design = Design::Example1;
  int n = 200;
  int p = 20;
  double rho1 = 0.3;
  double rho2 = 0.7;
  double b = 0.0;     // Example 4 signal scale
  int m = 100;        // 1-D grid size
  int m1 = 20, m2 = 30;
  uint64_t seed = 1;
  bool zero_noise = false;  // force xi1 = xi2 = eps = 0

  void validate() const {
    require(n > 0, "n must be positive");
    require(p >= 10, "p must be >= 10");
    require(std::abs(rho1) < 1.0, "|rho1| must be < 1");
    require(std::isfinite(rho2), "rho2 must be finite");
    // (xi1, xi2, eps) covariance is PSD iff 1 - 2 rho2^2 >= 0.
    require(1.0 - 2.0 * rho2 * rho2 >= -1e-12,
            "rho2 makes the (xi1, xi2, eps) covariance non-PSD (need |rho2| <= 1/sqrt(2))");
    require(b >= 0 && std::isfinite(b), "b must be a nonnegative real");
    if (design == Design::Example2)
      require(m1 >= 1 && m2 >= 1 && m1 * m2 >= 2, "grid sizes must give m >= 2");
    else
      require(m >= 2, "m must be >= 2");
  }
};

struct Truth {
  Vector beta;        // p
  Vector B;           // m, values on the grid
  Matrix C;           // p x m, values on the grid (zero rows off 1..5)
  Vector xi1, xi2, eps;
  Vector phi1, phi2;  // error-process basis on the grid
  std::vector<int> confounders{0};            // set C
  std::vector<int> instruments{1, 2, 3, 4};   // set I
  std::vector<int> precision{5, 6, 7, 8, 9};  // set P

  // True exposure and outcome supports (0-based).
  std::vector<int> exposure_support() const { return {0, 1, 2, 3, 4}; }
  std::vector<int> outcome_support() const { return {0, 5, 6, 7, 8, 9}; }
};

struct FunctionalDataset {
  Matrix X;  // n x p
  Matrix Z;  // n x m
  Vector Y;  // n
  Grid grid;
  bool has_truth = false;
  Truth truth;

  Index n() const { return X.rows(); }
  Index p() const { return X.cols(); }
  Index m() const { return Z.cols(); }

  void validate() const {
    require(X.rows() == Z.rows() && X.rows() == Y.size(), "row counts of X, Z, Y differ");
    require(Z.cols() == grid.size(), "Z columns do not match grid size");
    require(X.allFinite() && Z.allFinite() && Y.allFinite(), "non-finite values in data");
  }
};

// phi_{2k-1}(t) = sqrt2 cos((2k-1) pi t), phi_{2k}(t) = sqrt2 sin((2k-1) pi t).
inline double basis_phi(int k, double t) {
  require(k >= 1, "basis index must be >= 1");
  int j = (k + 1) / 2;
  double w = (2 * j - 1) * M_PI * t;
  return std::sqrt(2.0) * (k % 2 == 1 ? std::cos(w) : std::sin(w));
}

// B(t) = scale * sum_{k<=terms} (-1)^{k+1} k^{-2} phi_k(t).
inline double example_B(double t, int terms, double scale) {
  double s = 0;
  for (int k = 1; k <= terms; ++k) s += ((k % 2 == 1) ? 1.0 : -1.0) / (k * k) * basis_phi(k, t);
  return scale * s;
}

inline Vector example1_beta(int p, double first) {
  Vector beta = Vector::Zero(p);
  beta(0) = first;
  const double tail[5] = {5.5, 4.0, 3.5, 5.0, 4.5};
  for (int j = 0; j < 5; ++j) beta(5 + j) = tail[j];
  return beta;
}

inline Matrix endogeneity_covariance(double rho2) {
  Matrix V(3, 3);
  V << 1.0, 0.0, rho2, 0.0, 0.64, 0.8 * rho2, rho2, 0.8 * rho2, 1.0;
  return V;
}

namespace detail {

// Shared assembly: draws X, (xi1, xi2, eps) and builds Z and Y.
inline FunctionalDataset assemble(const SimConfig& cfg, Grid grid, const Vector& beta,
                                  Matrix Ctrue, Vector B, Vector phi1, Vector phi2) {
  Rng rng(cfg.seed);
  FunctionalDataset ds;
  ds.grid = std::move(grid);
  ds.X = mvn_sample(ar1_covariance(cfg.p, cfg.rho1), cfg.n, rng);
  Matrix noise = mvn_sample(endogeneity_covariance(cfg.rho2), cfg.n, rng);
  if (cfg.zero_noise) noise.setZero();
  Truth& tr = ds.truth;
  tr.beta = beta;
  tr.B = std::move(B);
  tr.C = std::move(Ctrue);
  tr.xi1 = noise.col(0);
  tr.xi2 = noise.col(1);
  tr.eps = noise.col(2);
  tr.phi1 = std::move(phi1);
  tr.phi2 = std::move(phi2);
  ds.Z = ds.X * tr.C + tr.xi1 * tr.phi1.transpose() + tr.xi2 * tr.phi2.transpose();
  ds.Y = ds.X * tr.beta + ds.grid.weight * (ds.Z * tr.B) + tr.eps;
  ds.has_truth = true;
  return ds;
}

inline FunctionalDataset gen_1d(const SimConfig& cfg, int b_terms, double b_scale) {
  cfg.validate();
  Grid g = Grid::uniform(cfg.m);
  const Index m = g.size();
  Matrix C = Matrix::Zero(cfg.p, m);
  Vector B(m), phi1(m), phi2(m);
  for (Index j = 0; j < m; ++j) {
    double t = g.points(j, 0);
    C(0, j) = 2 * t * t;
    C(1, j) = std::cos(1.5 * M_PI * t + 0.5 * M_PI);
    C(2, j) = std::sqrt(2.0) * std::sin(0.5 * M_PI * t) + 3 * std::sqrt(2.0) * std::sin(1.5 * M_PI * t);
    C(3, j) = 25 * std::exp(-t);
    C(4, j) = 5 + 7 * t;
    B(j) = example_B(t, b_terms, b_scale);
    phi1(j) = basis_phi(1, t);
    phi2(j) = basis_phi(2, t);
  }
  return assemble(cfg, std::move(g), example1_beta(cfg.p, 7.0), std::move(C), std::move(B),
                  std::move(phi1), std::move(phi2));
}

}  // namespace detail

inline FunctionalDataset gen_example1(const SimConfig& cfg) {
  require(cfg.design == Design::Example1, "gen_example1 needs design example1_1d");
  return detail::gen_1d(cfg, 10, 4.0);
}

// Example 1 design with B = b * sum_{k<=5} (-1)^{k+1} k^{-2} phi_k.
inline FunctionalDataset gen_example4(const SimConfig& cfg) {
  require(cfg.design == Design::Example4, "gen_example4 needs design example4_power");
  return detail::gen_1d(cfg, 5, cfg.b);
}

inline FunctionalDataset gen_example2(const SimConfig& cfg) {
  require(cfg.design == Design::Example2, "gen_example2 needs design example2_2d");
  cfg.validate();
  Grid g = Grid::uniform2d(cfg.m1, cfg.m2);
  const Index m = g.size();
  Matrix C = Matrix::Zero(cfg.p, m);
  Vector B(m), phi1(m), phi2(m);
  for (Index j = 0; j < m; ++j) {
    double s = g.points(j, 0), t = g.points(j, 1);
    C(0, j) = 2 * (s * s + t * t);
    C(1, j) = 3 * std::cos(0.5 * M_PI * s) * std::cos(0.5 * M_PI * t);
    C(2, j) = std::sqrt(2.0) / 2 * (std::sin(0.5 * M_PI * s) + 3 * std::sin(1.5 * M_PI * t));
    C(3, j) = std::exp(-(s - t));
    C(4, j) = 2 + s + t;
    B(j) = std::exp(-(s - t));
    phi1(j) = 1.588 * std::sin(M_PI * s);
    phi2(j) = 2.157 * (std::cos(M_PI * t) - 0.039);
  }
  return detail::assemble(cfg, std::move(g), example1_beta(cfg.p, 2.0), std::move(C), std::move(B),
                          std::move(phi1), std::move(phi2));
}

inline FunctionalDataset generate(const SimConfig& cfg) {
  switch (cfg.design) {
    case Design::Example1: return gen_example1(cfg);
    case Design::Example2: return gen_example2(cfg);
    case Design::Example4: return gen_example4(cfg);
  }
  throw ValidationError("unknown design");
}

}  // namespace flsem
