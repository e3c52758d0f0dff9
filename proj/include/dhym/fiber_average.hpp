#ifndef DHYM_FIBER_AVERAGE_HPP
#define DHYM_FIBER_AVERAGE_HPP

// Discrete push-forward of a product-space form to the base: each atom carries a horizontal
// form, the vertical eigenvalues lambda and a weight w, and contributes with fiber density
// w Im prod(lambda_k + i). The angle of the weighted vertical mass, zeta = arg sum w prod(lambda_k + i),
// plays the role of m arccot(K); the averaged form then satisfies Q <= theta_tilde0 - zeta.

#include <cmath>
#include <complex>
#include <vector>

#include "json.hpp"

#include "dhym/error.hpp"
#include "dhym/hermitian_core.hpp"
#include "dhym/linalg.hpp"
#include "dhym/random.hpp"

namespace dhym {

struct FiberAtom {
  HermMatrix horizontal;
  RealVector vertical;  // eigenvalues of the vertical form relative to the fiber metric
  double weight = 1.0;
  bool truncated = false;  // horizontal replaced by K * metric
};

inline cplx vertical_product(const RealVector& lambda)
{
  cplx z = 1.0;
  for (int i = 0; i < lambda.size(); ++i) z *= cplx(lambda(i), 1.0);
  return z;
}

inline double vertical_angle(const RealVector& lambda)
{
  double s = 0.0;
  for (int i = 0; i < lambda.size(); ++i) s += arccot(lambda(i));
  return s;
}

class FiberMeasure {
 public:
  FiberMeasure(HermMatrix metric, std::vector<FiberAtom> atoms) : metric_(std::move(metric)), atoms_(std::move(atoms))
  {
    const int m = static_cast<int>(metric_.rows());
    if (atoms_.empty()) fail(ErrorKind::BadMeasure, "measure has no atoms");
    if (!(min_eigenvalue(metric_) > 0.0)) fail(ErrorKind::MetricNotPositive, "fiber metric is not positive");
    for (std::size_t i = 0; i < atoms_.size(); ++i) {
      const auto& a = atoms_[i];
      if (a.horizontal.rows() != m || a.vertical.size() != m)
        fail(ErrorKind::BadMeasure, "atom " + std::to_string(i) + " has the wrong dimension");
      if (!(a.weight > 0.0)) fail(ErrorKind::BadMeasure, "atom " + std::to_string(i) + " has nonpositive weight");
      if (!(density(a) > 0.0))
        fail(ErrorKind::BadMeasure, "atom " + std::to_string(i) + " has nonpositive vertical density");
    }
  }

  int dim() const { return static_cast<int>(metric_.rows()); }
  const HermMatrix& metric() const { return metric_; }
  const std::vector<FiberAtom>& atoms() const { return atoms_; }

  /// w Im prod(lambda_k + i).
  static double density(const FiberAtom& a) { return a.weight * vertical_product(a.vertical).imag(); }

  /// Normalizing mass: sum of the densities.
  double total() const
  {
    double v = 0.0;
    for (const auto& a : atoms_) v += density(a);
    return v;
  }

  /// arg of sum w prod(lambda_k + i), the vertical phase.
  double zeta() const
  {
    cplx z = 0.0;
    for (const auto& a : atoms_) z += a.weight * vertical_product(a.vertical);
    return std::arg(z);
  }

  /// K with m arccot(K) = zeta.
  double effective_K() const { return cot(zeta() / dim()); }

  double truncated_fraction() const
  {
    double t = 0.0;
    for (const auto& a : atoms_)
      if (a.truncated) t += density(a);
    return t / total();
  }

  /// Largest Q_H + Q_V over the atoms (truncated atoms use K * metric).
  double max_budget() const
  {
    const double K = effective_K();
    double worst = 0.0;
    for (const auto& a : atoms_) {
      const double qh = a.truncated ? dim() * arccot(K) : angle_of(AngleKind::Q, metric_, a.horizontal);
      worst = std::max(worst, qh + vertical_angle(a.vertical));
    }
    return worst;
  }

  /// Splits atoms so that exactly `fraction` of the mass sits in truncated atoms, taken in
  /// atom order.
  FiberMeasure with_truncation(double fraction) const
  {
    if (!(fraction >= 0.0 && fraction <= 1.0)) fail(ErrorKind::BadMeasure, "fraction outside [0, 1]");
    const double target = fraction * total();
    double acc = 0.0;
    std::vector<FiberAtom> out;
    for (const auto& a : atoms_) {
      FiberAtom b = a;
      b.truncated = false;
      const double d = density(a);
      const double take = std::clamp(target - acc, 0.0, d);
      if (take >= d * (1.0 - 1e-12)) {
        b.truncated = true;
        out.push_back(b);
      } else if (take > d * 1e-12) {
        FiberAtom t = b;
        t.truncated = true;
        t.weight = a.weight * take / d;
        b.weight = a.weight - t.weight;
        out.push_back(t);
        out.push_back(b);
      } else {
        out.push_back(b);
      }
      acc += take;
    }
    return FiberMeasure(metric_, std::move(out));
  }

 private:
  HermMatrix metric_;
  std::vector<FiberAtom> atoms_;
};

/// Density-weighted average of the horizontal forms; truncated atoms contribute K * metric.
inline HermMatrix fiber_average(const FiberMeasure& mu)
{
  const double K = mu.effective_K();
  HermMatrix acc = HermMatrix::Zero(mu.dim(), mu.dim());
  for (const auto& a : mu.atoms()) acc += FiberMeasure::density(a) * (a.truncated ? HermMatrix(K * mu.metric()) : a.horizontal);
  return hermitian_part(acc / mu.total());
}

struct TruncatedBound {
  double q = 0.0;          // Q of the truncated average
  double fraction = 0.0;   // truncated mass fraction
  double lhs = 0.0;        // 1 / (cot Q - cot theta_tilde0)
  double rhs = 0.0;        // 1/(cot theta0 - cot theta_tilde0) + (cot theta0 - cot theta_tilde0)/(1 + cot^2 theta_tilde0) * fraction
  double theta0 = 0.0;     // theta_tilde0 - zeta
  bool holds = false;
};

/// Q of the truncated average together with the bound it must satisfy.
inline TruncatedBound truncated_fiber_bound(const FiberMeasure& mu, double theta_tilde0, double tol = 1e-9)
{
  TruncatedBound b;
  b.theta0 = theta_tilde0 - mu.zeta();
  b.fraction = mu.truncated_fraction();
  b.q = angle_of(AngleKind::Q, mu.metric(), fiber_average(mu));
  const double ct = cot(theta_tilde0);
  const double c0 = cot(b.theta0);
  b.lhs = 1.0 / (cot(b.q) - ct);
  b.rhs = 1.0 / (c0 - ct) + (c0 - ct) / (1.0 + ct * ct) * b.fraction;
  b.holds = b.lhs > 0.0 && b.lhs <= b.rhs * (1.0 + tol) + tol;
  return b;
}

/// Random measure with every atom inside the budget Q_H + Q_V <= theta_tilde0.
inline FiberMeasure random_fiber_measure(int m, double theta_tilde0, int atoms, Rng& rng)
{
  if (!(theta_tilde0 > 0.0 && theta_tilde0 < kPi)) fail(ErrorKind::HypothesisViolated, "theta_tilde0 must lie in (0, pi)");
  const HermMatrix metric = random_posdef(m, rng);
  std::vector<FiberAtom> out;
  for (int i = 0; i < atoms; ++i) {
    FiberAtom a;
    const double qv = uniform(rng, 0.02, 0.98) * theta_tilde0;
    a.vertical = spectrum_with_angle_sum(m, qv, rng);
    const double qh = uniform(rng, 0.02, 1.0) * (theta_tilde0 - qv);
    a.horizontal = form_with_spectrum(metric, spectrum_with_angle_sum(m, qh, rng), rng);
    a.weight = uniform(rng, 0.1, 2.0);
    out.push_back(std::move(a));
  }
  return FiberMeasure(metric, std::move(out));
}

struct JensenSample {
  double lhs = 0.0;  // 1 / (cot Q(avg) - cot theta_tilde0)
  double rhs = 0.0;  // weighted mean of 1 / (cot Q(.) - cot theta_tilde0)
};

/// Convex combination of forms with Q < theta_tilde0 under a fixed metric.
inline JensenSample jensen_step(const HermMatrix& metric, const std::vector<HermMatrix>& forms,
                                const std::vector<double>& weights, double theta_tilde0)
{
  const double ct = cot(theta_tilde0);
  double wsum = 0.0;
  HermMatrix avg = HermMatrix::Zero(metric.rows(), metric.cols());
  JensenSample s;
  for (std::size_t i = 0; i < forms.size(); ++i) {
    wsum += weights[i];
    avg += weights[i] * forms[i];
    s.rhs += weights[i] / (cot(angle_of(AngleKind::Q, metric, forms[i])) - ct);
  }
  s.rhs /= wsum;
  s.lhs = 1.0 / (cot(angle_of(AngleKind::Q, metric, hermitian_part(avg / wsum))) - ct);
  return s;
}

inline nlohmann::json to_json(const TruncatedBound& b)
{
  return {{"q", b.q}, {"fraction", b.fraction}, {"lhs", b.lhs}, {"rhs", b.rhs}, {"theta0", b.theta0}, {"holds", b.holds}};
}

}  // namespace dhym

#endif  // DHYM_FIBER_AVERAGE_HPP
