#pragma once

// Kernels, grids, operator algebra and sampling.
//
// Quadrature: uniform rectangle rule. A discretized integral operator with
// kernel k is stored as Delta * [k(t_i, t_j)] so that composition, trace and
// spectrum are plain matrix algebra.

#include <Eigen/Dense>
#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "flsem/errors.hpp"

namespace flsem {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

// ---------------------------------------------------------------- kernels

enum class KernelFamily { Brownian, OrnsteinUhlenbeck, Gaussian, Product2d };

struct KernelSpec {
  KernelFamily family = KernelFamily::Gaussian;
  KernelFamily inner = KernelFamily::Gaussian;  // used by Product2d only
  double bandwidth = 0.003;

  static KernelSpec brownian() { return {KernelFamily::Brownian, KernelFamily::Brownian, 1.0}; }
  static KernelSpec ou() { return {KernelFamily::OrnsteinUhlenbeck, KernelFamily::OrnsteinUhlenbeck, 1.0}; }
  static KernelSpec gaussian(double h) { return {KernelFamily::Gaussian, KernelFamily::Gaussian, h}; }
  static KernelSpec product(KernelFamily in, double h = 1.0) {
    require(in != KernelFamily::Product2d, "product kernel must wrap a 1-D family");
    return {KernelFamily::Product2d, in, h};
  }

  int dim() const { return family == KernelFamily::Product2d ? 2 : 1; }

  void validate() const {
    KernelFamily f = family == KernelFamily::Product2d ? inner : family;
    require(f != KernelFamily::Product2d, "product kernel must wrap a 1-D family");
    if (f == KernelFamily::Gaussian)
      require(bandwidth > 0 && std::isfinite(bandwidth), "gaussian kernel needs bandwidth > 0");
  }

  static double eval1(KernelFamily f, double h, double s, double t) {
    switch (f) {
      case KernelFamily::Brownian: return std::min(s, t);
      case KernelFamily::OrnsteinUhlenbeck: return std::exp(-std::abs(s - t));
      case KernelFamily::Gaussian: {
        double d = (s - t) / h;
        return std::exp(-0.5 * d * d);
      }
      default: break;
    }
    throw ValidationError("not a 1-D kernel family");
  }

  double operator()(double s, double t) const { return eval1(family, bandwidth, s, t); }
  double operator()(double s1, double s2, double t1, double t2) const {
    return eval1(inner, bandwidth, s1, t1) * eval1(inner, bandwidth, s2, t2);
  }
};

inline std::string family_name(KernelFamily f) {
  switch (f) {
    case KernelFamily::Brownian: return "brownian";
    case KernelFamily::OrnsteinUhlenbeck: return "ou";
    case KernelFamily::Gaussian: return "gaussian";
    case KernelFamily::Product2d: return "product";
  }
  return "?";
}

inline std::string to_string(const KernelSpec& k) {
  if (k.family == KernelFamily::Product2d) return "product:" + family_name(k.inner);
  return family_name(k.family);
}

inline KernelFamily parse_family(const std::string& s) {
  if (s == "brownian") return KernelFamily::Brownian;
  if (s == "ou" || s == "ornstein_uhlenbeck") return KernelFamily::OrnsteinUhlenbeck;
  if (s == "gaussian") return KernelFamily::Gaussian;
  throw ValidationError("unknown kernel family '" + s + "'");
}

// "brownian", "ou", "gaussian" or "product:<inner>".
inline KernelSpec parse_kernel(const std::string& s, double bandwidth) {
  KernelSpec k;
  k.bandwidth = bandwidth;
  const std::string pre = "product:";
  if (s.rfind(pre, 0) == 0) {
    k.family = KernelFamily::Product2d;
    k.inner = parse_family(s.substr(pre.size()));
  } else {
    k.family = parse_family(s);
    k.inner = k.family;
  }
  k.validate();
  return k;
}

// ---------------------------------------------------------------- grids

struct Grid {
  Matrix points;        // m x dim
  double weight = 0.0;  // Delta
  int m1 = 0, m2 = 0;   // tensor shape for 2-D grids (0 when unknown)

  Index size() const { return points.rows(); }
  int dim() const { return static_cast<int>(points.cols()); }

  // m midpoints (j + 1/2)/m of [0,1].
  static Grid uniform(int m) {
    require(m >= 2, "grid needs m >= 2");
    Grid g;
    g.points.resize(m, 1);
    for (int j = 0; j < m; ++j) g.points(j, 0) = (j + 0.5) / m;
    g.weight = 1.0 / m;
    return g;
  }

  // m1 x m2 midpoints of [0,1]^2, flattened row-major (t2 fastest).
  static Grid uniform2d(int m1, int m2) {
    require(m1 >= 1 && m2 >= 1 && m1 * m2 >= 2, "grid needs m >= 2");
    Grid g;
    g.points.resize(static_cast<Index>(m1) * m2, 2);
    for (int a = 0; a < m1; ++a)
      for (int b = 0; b < m2; ++b) {
        g.points(a * m2 + b, 0) = (a + 0.5) / m1;
        g.points(a * m2 + b, 1) = (b + 0.5) / m2;
      }
    g.weight = 1.0 / (static_cast<double>(m1) * m2);
    g.m1 = m1;
    g.m2 = m2;
    return g;
  }

  // Arbitrary ordered points on the unit interval/square; Delta = 1/m.
  static Grid from_points(const Matrix& pts) {
    Grid g;
    g.points = pts;
    g.weight = pts.rows() > 0 ? 1.0 / static_cast<double>(pts.rows()) : 0.0;
    g.validate();
    return g;
  }

  Grid subset(const std::vector<int>& idx) const {
    Grid g;
    g.points.resize(static_cast<Index>(idx.size()), points.cols());
    for (size_t i = 0; i < idx.size(); ++i) g.points.row(static_cast<Index>(i)) = points.row(idx[i]);
    g.weight = weight;
    return g;
  }

  void validate() const {
    require(points.rows() >= 2, "grid needs m >= 2");
    require(points.cols() == 1 || points.cols() == 2, "grid must be 1-D or 2-D");
    require(weight > 0, "grid weight must be positive");
    require(points.allFinite(), "grid points must be finite");
    for (Index j = 1; j < points.rows(); ++j) {
      if (points.cols() == 1) {
        require(points(j, 0) > points(j - 1, 0), "1-D grid points must be strictly increasing");
      } else {
        bool ok = points(j, 0) > points(j - 1, 0) ||
                  (points(j, 0) == points(j - 1, 0) && points(j, 1) > points(j - 1, 1));
        require(ok, "2-D grid points must be in lexicographic order");
      }
    }
  }
};

// Pointwise kernel matrix Sigma_{jk} = K(t_j, t_k).
inline Matrix gram_matrix(const KernelSpec& k, const Grid& g) {
  k.validate();
  require(k.dim() == g.dim(), "kernel dimension does not match grid dimension");
  const Index m = g.size();
  Matrix S(m, m);
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j <= i; ++j) {
      double v = g.dim() == 1 ? k(g.points(i, 0), g.points(j, 0))
                              : k(g.points(i, 0), g.points(i, 1), g.points(j, 0), g.points(j, 1));
      S(i, j) = v;
      S(j, i) = v;
    }
  return S;
}

// ---------------------------------------------------------------- operators

struct OperatorMatrix {
  Matrix tilde;

  static OperatorMatrix from_kernel_matrix(const Matrix& pointwise, double delta) {
    return {delta * pointwise};
  }
  double trace() const { return tilde.trace(); }
  double trace_sq() const { return tilde.squaredNorm(); }  // tr(A^2) for symmetric A
  bool symmetric(double tol = 1e-10) const {
    double s = std::max(1.0, tilde.cwiseAbs().maxCoeff());
    return (tilde - tilde.transpose()).cwiseAbs().maxCoeff() <= tol * s;
  }
};

struct EigenDecomp {
  Vector values;   // descending
  Matrix vectors;  // orthonormal columns

  Matrix reconstruct() const { return vectors * values.asDiagonal() * vectors.transpose(); }
};

// Symmetric eigendecomposition, eigenvalues sorted descending. Eigenvalues in
// [-clip_rel * max, 0) are set to zero.
inline EigenDecomp sym_eig(const Matrix& A, double clip_rel = 1e-10) {
  require(A.rows() == A.cols(), "eigendecomposition needs a square matrix");
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (A + A.transpose()));
  if (es.info() != Eigen::Success) throw NumericalError("symmetric eigensolver failed");
  const Index m = A.rows();
  EigenDecomp d;
  d.values.resize(m);
  d.vectors.resize(m, m);
  for (Index j = 0; j < m; ++j) {
    d.values(j) = es.eigenvalues()(m - 1 - j);
    d.vectors.col(j) = es.eigenvectors().col(m - 1 - j);
  }
  double top = m > 0 ? std::max(0.0, d.values(0)) : 0.0;
  for (Index j = 0; j < m; ++j)
    if (d.values(j) < 0 && d.values(j) >= -clip_rel * top) d.values(j) = 0.0;
  return d;
}

inline OperatorMatrix operator_sqrt(const OperatorMatrix& A) {
  EigenDecomp d = sym_eig(A.tilde, 0.0);
  double top = d.values.size() ? std::max(0.0, d.values(0)) : 0.0;
  for (Index j = 0; j < d.values.size(); ++j) {
    if (d.values(j) < -1e-6 * top) throw NumericalError("operator_sqrt: input is not PSD");
    d.values(j) = std::sqrt(std::max(0.0, d.values(j)));
  }
  return {d.reconstruct()};
}

// P(chi^2_dof > x) as the regularized upper incomplete gamma Q(dof/2, x/2).
inline double chi2_upper_tail(double x, double dof) {
  require(dof > 0, "chi2_upper_tail: dof must be positive");
  if (!(x > 0)) return 1.0;
  if (std::isinf(x)) return 0.0;
  return boost::math::gamma_q(0.5 * dof, 0.5 * x);
}

inline double chi2_lower_tail(double x, double dof) {
  require(dof > 0, "chi2_lower_tail: dof must be positive");
  if (!(x > 0)) return 0.0;
  if (std::isinf(x)) return 1.0;
  return boost::math::gamma_p(0.5 * dof, 0.5 * x);
}

inline Matrix ar1_covariance(int p, double rho) {
  require(p >= 1, "ar1_covariance: p must be >= 1");
  require(std::abs(rho) < 1.0, "ar1_covariance: |rho| must be < 1");
  Matrix S(p, p);
  for (int j = 0; j < p; ++j)
    for (int k = 0; k < p; ++k) S(j, k) = std::pow(rho, std::abs(j - k));
  return S;
}

// ---------------------------------------------------------------- sampling

// Engine: std::mt19937_64, whose output sequence is fixed by the C++ standard
// (w=64, n=312, m=156, r=31, a=0xb5026f5aa96619e9, ...). Uniforms take the top
// 53 bits; normals use the Box-Muller transform with a cached second variate.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  double uniform() {  // in (0, 1)
    return (static_cast<double>(eng_() >> 11) + 0.5) * 0x1.0p-53;
  }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform(), u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double th = 2.0 * M_PI * u2;
    spare_ = r * std::sin(th);
    has_spare_ = true;
    return r * std::cos(th);
  }

  Matrix normal_matrix(Index rows, Index cols) {
    Matrix M(rows, cols);
    for (Index i = 0; i < rows; ++i)
      for (Index j = 0; j < cols; ++j) M(i, j) = normal();
    return M;
  }

  std::mt19937_64& engine() { return eng_; }

 private:
  std::mt19937_64 eng_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Lower factor L with L L^T = cov. Falls back to a pivoted LDL^T (PSD but
// singular covariances) and then to ridge jitter of 1e-10 * scale.
inline Matrix covariance_factor(const Matrix& cov) {
  require(cov.rows() == cov.cols(), "covariance must be square");
  const Index p = cov.rows();
  Eigen::LLT<Matrix> llt(cov);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  double scale = std::max(1.0, cov.diagonal().cwiseAbs().maxCoeff());
  Eigen::LDLT<Matrix> ldlt(cov);
  if (ldlt.info() == Eigen::Success) {
    Vector D = ldlt.vectorD();
    if (D.minCoeff() >= -1e-10 * scale) {
      Matrix L = ldlt.matrixL();
      Matrix F = ldlt.transpositionsP().transpose() * (L * D.cwiseMax(0.0).cwiseSqrt().asDiagonal());
      if ((F * F.transpose() - cov).cwiseAbs().maxCoeff() <= 1e-9 * scale) return F;
    }
  }
  double jitter = 1e-10 * scale;
  for (int attempt = 0; attempt < 5; ++attempt, jitter *= 10) {
    Eigen::LLT<Matrix> j(cov + jitter * Matrix::Identity(p, p));
    if (j.info() == Eigen::Success) return j.matrixL();
  }
  throw NumericalError("covariance factorization failed after ridge jitter");
}

// n draws from N(0, cov), one per row.
inline Matrix mvn_sample(const Matrix& cov, Index n, Rng& rng) {
  Matrix L = covariance_factor(cov);
  Matrix E = rng.normal_matrix(n, cov.rows());
  return E * L.transpose();
}

}  // namespace flsem
