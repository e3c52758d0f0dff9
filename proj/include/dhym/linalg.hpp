#ifndef DHYM_LINALG_HPP
#define DHYM_LINALG_HPP

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <numbers>

#include "dhym/error.hpp"

namespace dhym {

using cplx = std::complex<double>;
using HermMatrix = Eigen::MatrixXcd;
using RealVector = Eigen::VectorXd;

inline constexpr double kPi = std::numbers::pi;

/// Frobenius-relative anti-Hermitian defect, 0 for exactly Hermitian input.
inline double hermitian_defect(const HermMatrix& m)
{
  const double scale = m.norm();
  if (scale == 0.0) return 0.0;
  return (m - m.adjoint()).norm() / scale;
}

inline bool is_hermitian(const HermMatrix& m, double rel_tol = 1e-12)
{
  return m.rows() == m.cols() && hermitian_defect(m) <= rel_tol;
}

inline HermMatrix hermitian_part(const HermMatrix& m)
{
  return (m + m.adjoint()) * 0.5;
}

inline RealVector hermitian_eigenvalues(const HermMatrix& m)
{
  Eigen::SelfAdjointEigenSolver<HermMatrix> solver(hermitian_part(m), Eigen::EigenvaluesOnly);
  return solver.eigenvalues();
}

inline double min_eigenvalue(const HermMatrix& m)
{
  return hermitian_eigenvalues(m).minCoeff();
}

/// True when rhs - lhs is positive semidefinite up to `tol` (scaled by the operands).
inline bool loewner_leq(const HermMatrix& lhs, const HermMatrix& rhs, double tol = 1e-12)
{
  const double scale = std::max({1.0, lhs.norm(), rhs.norm()});
  return min_eigenvalue(rhs - lhs) >= -tol * scale;
}

/// Hermitian power A^p of a positive definite matrix.
inline HermMatrix posdef_power(const HermMatrix& a, double p)
{
  Eigen::SelfAdjointEigenSolver<HermMatrix> solver(hermitian_part(a));
  const RealVector& d = solver.eigenvalues();
  if (d.minCoeff() <= 0.0) fail(ErrorKind::MetricNotPositive, "matrix power of a non-positive matrix");
  RealVector dp = d.unaryExpr([p](double x) { return std::pow(x, p); });
  return solver.eigenvectors() * dp.cast<cplx>().asDiagonal() * solver.eigenvectors().adjoint();
}

/// Reduces the generalized problem B v = lambda A v to an ordinary Hermitian one by the
/// congruence A^{-1/2} B A^{-1/2}. Build once per metric, then query many forms.
class MetricReduction {
 public:
  explicit MetricReduction(const HermMatrix& metric)
  {
    if (metric.rows() != metric.cols() || metric.rows() == 0)
      fail(ErrorKind::MetricNotPositive, "metric must be a non-empty square matrix");
    if (!is_hermitian(metric)) fail(ErrorKind::MetricNotPositive, "metric is not Hermitian");
    Eigen::SelfAdjointEigenSolver<HermMatrix> solver(hermitian_part(metric));
    const RealVector& d = solver.eigenvalues();
    if (!(d.minCoeff() > 0.0))
      fail(ErrorKind::MetricNotPositive, "smallest metric eigenvalue " + std::to_string(d.minCoeff()));
    RealVector inv = d.cwiseSqrt().cwiseInverse();
    inv_sqrt_ = solver.eigenvectors() * inv.cast<cplx>().asDiagonal() * solver.eigenvectors().adjoint();
  }

  int dim() const { return static_cast<int>(inv_sqrt_.rows()); }
  const HermMatrix& inverse_sqrt() const { return inv_sqrt_; }

  HermMatrix reduce(const HermMatrix& form) const
  {
    return hermitian_part(inv_sqrt_ * form * inv_sqrt_);
  }

  /// Ascending eigenvalues of metric^{-1} form.
  RealVector eigenvalues(const HermMatrix& form) const
  {
    return hermitian_eigenvalues(reduce(form));
  }

 private:
  HermMatrix inv_sqrt_;
};

}  // namespace dhym

#endif  // DHYM_LINALG_HPP
