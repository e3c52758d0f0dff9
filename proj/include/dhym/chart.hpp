#ifndef DHYM_CHART_HPP
#define DHYM_CHART_HPP

// Euclidean chart tools: a uniform real 2m-grid over the box around B_{4R}(0), potentials
// sampled on it, radial-kernel smoothing, sup over balls, and the Lelong-slope quotient.

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"

#include "dhym/error.hpp"
#include "dhym/linalg.hpp"

namespace dhym {

/// Area of the unit sphere S^{2m-1} in R^{2m}: 2 pi^m / (m-1)!.
inline double sphere_area(int m) { return 2.0 * std::pow(kPi, m) / std::tgamma(static_cast<double>(m)); }

/// Radial bump, constant on [0, 1/2] and vanishing for t >= 1:
/// rho(t) = c exp(1 - 1/(1 - s(t)^2)), with s a smooth step from 0 at 1/2 to 1 at 1.
class MollifierKernel {
 public:
  explicit MollifierKernel(int m) : m_(m)
  {
    if (m < 1) fail(ErrorKind::ConfigError, "kernel dimension must be positive");
    const double n = 2.0 * m;
    const double inner = std::pow(0.5, n) / n;
    const double outer = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
        [&](double t) { return shape(t) * std::pow(t, n - 1); }, 0.5, 1.0, 15, 1e-15);
    scale_ = 1.0 / (sphere_area(m) * (inner + outer));
  }

  int m() const { return m_; }
  double scale() const { return scale_; }

  double operator()(double t) const { return scale_ * shape(t); }

  /// Unnormalized profile.
  static double shape(double t)
  {
    if (t <= 0.5) return 1.0;
    if (t >= 1.0) return 0.0;
    const double s = step((t - 0.5) * 2.0);
    if (s >= 1.0) return 0.0;
    return std::exp(1.0 - 1.0 / (1.0 - s * s));
  }

  /// integral over B_1 of rho(|y|) |y|^power dVol.
  double radial_moment(double power) const
  {
    const double n = 2.0 * m_;
    const double inner = std::pow(0.5, n + power) / (n + power);
    const double outer = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
        [&](double t) { return shape(t) * std::pow(t, n - 1 + power); }, 0.5, 1.0, 15, 1e-15);
    return sphere_area(m_) * scale_ * (inner + outer);
  }

  /// integral_0^1 log(1/t) t^{2m-1} rho(t) dt.
  double log_moment() const
  {
    const double n = 2.0 * m_;
    const double a = 0.5;
    const double inner = std::pow(a, n) * (1.0 / (n * n) - std::log(a) / n);
    const double outer = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
        [&](double t) { return -std::log(t) * shape(t) * std::pow(t, n - 1); }, 0.5, 1.0, 15, 1e-15);
    return scale_ * (inner + outer);
  }

 private:
  static double step(double u)
  {
    auto psi = [](double x) { return x > 0.0 ? std::exp(-1.0 / x) : 0.0; };
    const double a = psi(u);
    const double b = psi(1.0 - u);
    return a / (a + b);
  }

  int m_;
  double scale_ = 1.0;
};

/// eta = 3^{2m-1}/2^{2m-3} log 2 + |S^{2m-1}| integral_0^1 log(1/t) t^{2m-1} rho(t) dt.
inline double eta_constant(int m, const MollifierKernel& kernel)
{
  return std::pow(3.0, 2 * m - 1) / std::pow(2.0, 2 * m - 3) * std::log(2.0) + sphere_area(m) * kernel.log_moment();
}

/// Integer offsets within a radius, in units of the grid spacing.
using Offset = std::vector<int>;

class ChartGrid {
 public:
  ChartGrid(int m, double R, double h) : m_(m), R_(R), h_(h)
  {
    if (m < 1 || m > 3) fail(ErrorKind::ConfigError, "chart dimension must be 1..3");
    if (!(R > 0.0 && h > 0.0)) fail(ErrorKind::ConfigError, "chart radius and spacing must be positive");
    half_ = static_cast<int>(std::ceil(4.0 * R / h - 1e-9));
  }

  int m() const { return m_; }
  double R() const { return R_; }
  double h() const { return h_; }
  int half_width() const { return half_; }
  int axis_points() const { return 2 * half_ + 1; }

  std::vector<double> coordinates(const Offset& idx) const
  {
    std::vector<double> x(idx.size());
    for (std::size_t a = 0; a < idx.size(); ++a) x[a] = idx[a] * h_;
    return x;
  }

  /// Grid point nearest to x.
  Offset nearest(const std::vector<double>& x) const
  {
    if (static_cast<int>(x.size()) != 2 * m_) fail(ErrorKind::ConfigError, "point has the wrong dimension");
    Offset idx(x.size());
    for (std::size_t a = 0; a < x.size(); ++a) idx[a] = static_cast<int>(std::lround(x[a] / h_));
    return idx;
  }

  double radius(const Offset& idx) const
  {
    double s = 0.0;
    for (int v : idx) s += double(v) * v;
    return std::sqrt(s) * h_;
  }

  bool in_box(const Offset& idx) const
  {
    for (int v : idx)
      if (v < -half_ || v > half_) return false;
    return true;
  }

  /// Offsets k with |k| h <= r (inclusive up to a relative 1e-9), cached per radius.
  const std::vector<Offset>& ball(double r) const
  {
    auto it = balls_.find(r);
    if (it != balls_.end()) return it->second;
    const int lim = static_cast<int>(std::floor(r / h_ + 1e-9));
    const double r2 = (r / h_) * (r / h_) * (1.0 + 1e-9);
    std::vector<Offset> out;
    Offset k(2 * m_, -lim);
    while (true) {
      double s = 0.0;
      for (int v : k) s += double(v) * v;
      if (s <= r2) out.push_back(k);
      int a = 2 * m_ - 1;
      while (a >= 0 && ++k[a] > lim) k[a--] = -lim;
      if (a < 0) break;
    }
    return balls_.emplace(r, std::move(out)).first->second;
  }

 private:
  int m_;
  double R_;
  double h_;
  int half_ = 0;
  mutable std::map<double, std::vector<Offset>> balls_;
};

/// Closed-form terms for chart potentials; the plurisubharmonic ones carry nonnegative
/// coefficients.
struct PotentialTerm {
  enum class Kind { Constant, Quadratic, Linear, LogPole, LogOnePlus } kind = Kind::Constant;
  double coeff = 0.0;
  std::vector<double> point;  // pole / center, or the linear covector
};

inline double eval_term(const PotentialTerm& t, const std::vector<double>& x)
{
  auto dist2 = [&](const std::vector<double>& p) {
    double s = 0.0;
    for (std::size_t a = 0; a < x.size(); ++a) {
      const double d = x[a] - (p.empty() ? 0.0 : p[a]);
      s += d * d;
    }
    return s;
  };
  switch (t.kind) {
    case PotentialTerm::Kind::Constant: return t.coeff;
    case PotentialTerm::Kind::Quadratic: return t.coeff * dist2(t.point);
    case PotentialTerm::Kind::Linear: {
      double s = 0.0;
      for (std::size_t a = 0; a < x.size(); ++a) s += t.point[a] * x[a];
      return t.coeff * s;
    }
    case PotentialTerm::Kind::LogPole: {
      const double d = dist2(t.point);
      return d == 0.0 ? -std::numeric_limits<double>::infinity() : t.coeff * std::log(d);
    }
    case PotentialTerm::Kind::LogOnePlus: return t.coeff * std::log1p(dist2(t.point));
  }
  return 0.0;
}

class ChartPotential {
 public:
  using Sampler = std::function<double(const std::vector<double>&)>;

  ChartPotential(std::shared_ptr<const ChartGrid> grid, Sampler sampler, bool psh_declared)
      : grid_(std::move(grid)), sampler_(std::move(sampler)), psh_(psh_declared)
  {
  }

  static ChartPotential from_terms(std::shared_ptr<const ChartGrid> grid, std::vector<PotentialTerm> terms)
  {
    bool psh = true;
    for (const auto& t : terms) {
      const bool pluriharmonic = t.kind == PotentialTerm::Kind::Constant || t.kind == PotentialTerm::Kind::Linear;
      if (!pluriharmonic && t.coeff < 0.0) psh = false;
      if (!t.point.empty() && static_cast<int>(t.point.size()) != 2 * grid->m())
        fail(ErrorKind::ConfigError, "potential term point has the wrong dimension");
    }
    ChartPotential p(grid, [terms](const std::vector<double>& x) {
      double v = 0.0;
      for (const auto& t : terms) v += eval_term(t, x);
      return v;
    }, psh);
    p.terms_ = std::move(terms);
    return p;
  }

  const ChartGrid& grid() const { return *grid_; }
  std::shared_ptr<const ChartGrid> grid_ptr() const { return grid_; }
  bool psh_declared() const { return psh_; }
  double floor() const { return floor_; }
  void set_floor(double f) { floor_ = f; }
  const std::vector<PotentialTerm>& terms() const { return terms_; }

  /// Sample clamped at the floor.
  double value(const Offset& idx) const
  {
    const double v = sampler_(grid_->coordinates(idx));
    return std::isnan(v) || v < floor_ ? floor_ : v;
  }

  bool at_floor(const Offset& idx) const { return value(idx) <= floor_; }

 private:
  std::shared_ptr<const ChartGrid> grid_;
  Sampler sampler_;
  bool psh_ = false;
  double floor_ = -1e12;
  std::vector<PotentialTerm> terms_;
};

namespace detail {

inline Offset shifted(const Offset& z, const Offset& k, int sign)
{
  Offset out(z.size());
  for (std::size_t a = 0; a < z.size(); ++a) out[a] = z[a] + sign * k[a];
  return out;
}

inline void check_query(const ChartGrid& g, const Offset& z, double r, double max_r)
{
  if (!(r > 0.0)) fail(ErrorKind::ResolutionError, "radius must be positive");
  if (!(r < max_r)) fail(ErrorKind::ResolutionError, "radius " + std::to_string(r) + " is too large for R = " + std::to_string(g.R()));
  if (g.h() > r / 8.0 + 1e-12)
    fail(ErrorKind::ResolutionError, "grid spacing " + std::to_string(g.h()) + " exceeds r/8 for r = " + std::to_string(r));
  if (g.radius(z) > 3.0 * g.R() + 1e-12) fail(ErrorKind::ResolutionError, "query point lies outside B_{3R}");
}

}  // namespace detail

/// Kernel weights rho(|k| h / r) over the open r-ball, in grid order.
struct KernelStencil {
  std::vector<Offset> offsets;
  std::vector<double> weights;
  double discrete_mass = 0.0;  // sum of weights * h^{2m} r^{-2m}; approximates 1
};

inline KernelStencil kernel_stencil(const ChartGrid& g, const MollifierKernel& kernel, double r)
{
  KernelStencil s;
  for (const Offset& k : g.ball(r)) {
    const double w = kernel(g.radius(k) / r);
    if (w <= 0.0) continue;
    s.offsets.push_back(k);
    s.weights.push_back(w);
  }
  double sum = 0.0;
  for (double w : s.weights) sum += w;
  s.discrete_mass = sum * std::pow(g.h() / r, 2 * g.m());
  return s;
}

/// Generic kernel average of sample(z - y); floor cells are dropped and the mass renormalized.
template <class Value, class Sample, class Skip>
Value kernel_average(const KernelStencil& st, const Offset& z, Sample&& sample, Skip&& skip, Value zero)
{
  Value acc = zero;
  double mass = 0.0;
  for (std::size_t i = 0; i < st.offsets.size(); ++i) {
    const Offset p = detail::shifted(z, st.offsets[i], -1);
    if (skip(p)) continue;
    acc += st.weights[i] * sample(p);
    mass += st.weights[i];
  }
  if (mass == 0.0) fail(ErrorKind::ResolutionError, "every cell of the stencil sits at the floor");
  return acc / mass;
}

/// T^{(r)}(z).
inline double mollify_at(const ChartPotential& T, const MollifierKernel& kernel, const Offset& z, double r)
{
  const ChartGrid& g = T.grid();
  detail::check_query(g, z, r, g.R());
  const KernelStencil st = kernel_stencil(g, kernel, r);
  return kernel_average(st, z, [&](const Offset& p) { return T.value(p); }, [&](const Offset& p) { return T.at_floor(p); },
                        0.0);
}

/// sup of T over grid points within distance r of z.
inline double sup_at(const ChartPotential& T, const Offset& z, double r)
{
  const ChartGrid& g = T.grid();
  if (g.radius(z) + r > 4.0 * g.R() + 1e-12) fail(ErrorKind::ResolutionError, "sup ball leaves B_{4R}");
  double best = -std::numeric_limits<double>::infinity();
  for (const Offset& k : g.ball(r)) best = std::max(best, T.value(detail::shifted(z, k, 1)));
  return best;
}

/// Checked sup-convolution psi_r(z).
inline double sup_convolution(const ChartPotential& T, const Offset& z, double r)
{
  detail::check_query(T.grid(), z, r, T.grid().R());
  return sup_at(T, z, r);
}

/// (psi_{3R/4}(z) - psi_r(z)) / (log(3R/4) - log r).
inline double lelong_proxy(const ChartPotential& T, const Offset& z, double r)
{
  const ChartGrid& g = T.grid();
  if (!(r > 0.0 && r < g.R() / 2)) fail(ErrorKind::ResolutionError, "Lelong radius must lie in (0, R/2)");
  detail::check_query(g, z, r, g.R());
  const double outer = 0.75 * g.R();
  return (sup_at(T, z, outer) - sup_at(T, z, r)) / (std::log(outer) - std::log(r));
}

struct ComparisonResult {
  double gap_half = 0.0;   // psi_r - psi_{r/2}
  double gap_moll = 0.0;   // psi_r - T^{(r)}
  double nu = 0.0;
  double eta = 0.0;
  bool asserted = false;   // only for plurisubharmonic-declared inputs
  bool half_holds = true;
  bool moll_holds = true;
  double half_slack = 0.0; // log2 nu - gap_half
  double moll_slack = 0.0; // eta nu - gap_moll
};

inline ComparisonResult comparison_check(const ChartPotential& T, const MollifierKernel& kernel, const Offset& z, double r,
                                         double tol = 1e-9)
{
  const ChartGrid& g = T.grid();
  if (!(r < g.R() / 2)) fail(ErrorKind::ResolutionError, "comparison radius must be below R/2");
  detail::check_query(g, z, r, g.R());
  ComparisonResult c;
  const double psi_r = sup_at(T, z, r);
  c.gap_half = psi_r - sup_at(T, z, r / 2);
  c.gap_moll = psi_r - mollify_at(T, kernel, z, r);
  c.nu = lelong_proxy(T, z, r);
  c.eta = eta_constant(g.m(), kernel);
  c.half_slack = std::log(2.0) * c.nu - c.gap_half;
  c.moll_slack = c.eta * c.nu - c.gap_moll;
  c.asserted = T.psh_declared();
  if (c.asserted) {
    c.half_holds = c.gap_half >= -tol && c.half_slack >= -tol;
    c.moll_holds = c.gap_moll >= -tol && c.moll_slack >= -tol;
  }
  return c;
}

/// Samples of an operator applied at every grid point of B_{3R}; the CSV dump format.
struct ChartField {
  std::vector<Offset> points;
  std::vector<double> values;
};

inline ChartField sample_field(const ChartGrid& g, const std::function<double(const Offset&)>& fn, double radius)
{
  ChartField f;
  for (const Offset& k : g.ball(radius)) {
    f.points.push_back(k);
    f.values.push_back(fn(k));
  }
  return f;
}

inline ChartField mollify(const ChartPotential& T, const MollifierKernel& kernel, double r)
{
  const ChartGrid& g = T.grid();
  detail::check_query(g, Offset(2 * g.m(), 0), r, g.R());
  const KernelStencil st = kernel_stencil(g, kernel, r);
  return sample_field(g, [&](const Offset& z) {
    return kernel_average(st, z, [&](const Offset& p) { return T.value(p); }, [&](const Offset& p) { return T.at_floor(p); }, 0.0);
  }, 3.0 * g.R());
}

inline nlohmann::json to_json(const ComparisonResult& c)
{
  return {{"gap_half", c.gap_half},   {"gap_moll", c.gap_moll},     {"nu", c.nu},
          {"eta", c.eta},             {"asserted", c.asserted},     {"half_holds", c.half_holds},
          {"moll_holds", c.moll_holds}, {"half_slack", c.half_slack}, {"moll_slack", c.moll_slack}};
}

}  // namespace dhym

#endif  // DHYM_CHART_HPP
