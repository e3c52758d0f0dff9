#ifndef DHYM_RANDOM_HPP
#define DHYM_RANDOM_HPP

// Seeded samplers shared by the property sweeps, the calibration runs and the tests.

#include <cstdint>
#include <random>

#include "dhym/linalg.hpp"

namespace dhym {

using Rng = std::mt19937_64;

/// Derives an independent stream for shard `index` of a run seeded with `seed`.
inline Rng shard_rng(std::uint64_t seed, std::uint64_t index)
{
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return Rng(seq);
}

inline double uniform(Rng& rng, double lo = 0.0, double hi = 1.0)
{
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline double gaussian(Rng& rng)
{
  return std::normal_distribution<double>(0.0, 1.0)(rng);
}

inline cplx complex_gaussian(Rng& rng)
{
  return {gaussian(rng), gaussian(rng)};
}

inline Eigen::MatrixXcd complex_gaussian_matrix(int rows, int cols, Rng& rng)
{
  Eigen::MatrixXcd m(rows, cols);
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < rows; ++i) m(i, j) = complex_gaussian(rng);
  return m;
}

inline HermMatrix random_hermitian(int n, Rng& rng, double scale = 1.0)
{
  return hermitian_part(complex_gaussian_matrix(n, n, rng)) * scale;
}

/// Haar-distributed unitary (QR of a Ginibre matrix with the phase correction).
inline Eigen::MatrixXcd random_unitary(int n, Rng& rng)
{
  Eigen::HouseholderQR<Eigen::MatrixXcd> qr(complex_gaussian_matrix(n, n, rng));
  Eigen::MatrixXcd q = qr.householderQ();
  const Eigen::MatrixXcd& r = qr.matrixQR();
  for (int j = 0; j < n; ++j) {
    const double mag = std::abs(r(j, j));
    if (mag > 0.0) q.col(j) *= r(j, j) / mag;
  }
  return q;
}

/// Positive definite matrix with eigenvalues drawn log-uniformly from [lo, hi].
inline HermMatrix random_posdef(int n, Rng& rng, double lo = 0.2, double hi = 5.0)
{
  Eigen::MatrixXcd u = random_unitary(n, rng);
  RealVector d(n);
  for (int i = 0; i < n; ++i) d(i) = std::exp(uniform(rng, std::log(lo), std::log(hi)));
  return hermitian_part(u * d.cast<cplx>().asDiagonal() * u.adjoint());
}

/// Positive semidefinite matrix of random rank (possibly zero).
inline HermMatrix random_psd(int n, Rng& rng, double scale = 1.0)
{
  const int rank = static_cast<int>(std::uniform_int_distribution<int>(0, n)(rng));
  Eigen::MatrixXcd g = complex_gaussian_matrix(n, std::max(rank, 1), rng);
  if (rank == 0) return HermMatrix::Zero(n, n);
  return hermitian_part(g * g.adjoint()) * scale;
}

/// Form whose eigenvalues relative to `metric` are exactly `lambda` (up to rounding).
inline HermMatrix form_with_spectrum(const HermMatrix& metric, const RealVector& lambda, Rng& rng)
{
  const int n = static_cast<int>(metric.rows());
  HermMatrix root = posdef_power(metric, 0.5);
  Eigen::MatrixXcd u = random_unitary(n, rng);
  return hermitian_part(root * u * lambda.cast<cplx>().asDiagonal() * u.adjoint() * root);
}

/// Eigenvalue vector whose arccot values are positive and sum to `total`, each at
/// least `min_angle` (requires n * min_angle < total).
inline RealVector spectrum_with_angle_sum(int n, double total, Rng& rng, double min_angle = 0.0)
{
  RealVector w(n);
  for (int i = 0; i < n; ++i) w(i) = -std::log(uniform(rng, 1e-12, 1.0));
  w /= w.sum();
  const double free = total - n * min_angle;
  RealVector lambda(n);
  for (int i = 0; i < n; ++i) {
    const double angle = min_angle + free * w(i);
    lambda(i) = std::cos(angle) / std::sin(angle);
  }
  return lambda;
}

}  // namespace dhym

#endif  // DHYM_RANDOM_HPP
