#ifndef DHYM_REGULARIZED_MAX_HPP
#define DHYM_REGULARIZED_MAX_HPP

// Smooth maximum of finitely many potentials. The two-input step is
//   M(a, b) = (a + b)/2 + h((a - b)/2)
// with h the absolute value convolved with the biweight kernel of half-width delta, so h = |x|
// for |x| >= delta and |x| <= h <= |x| + 5 delta/16. Several inputs are folded in ascending order
// with delta = eps/(p - 1) per stage.

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "json.hpp"

#include "dhym/chart.hpp"
#include "dhym/error.hpp"
#include "dhym/hermitian_core.hpp"
#include "dhym/linalg.hpp"

namespace dhym {

/// |x| smoothed on [-delta, delta]; value and first two derivatives.
struct SmoothAbs {
  double value = 0.0;
  double d1 = 0.0;
  double d2 = 0.0;
};

inline SmoothAbs smooth_abs(double x, double delta)
{
  if (!(delta > 0.0)) return {std::abs(x), x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0), 0.0};
  const double u = x / delta;
  if (std::abs(u) >= 1.0) return {std::abs(x), u > 0.0 ? 1.0 : -1.0, 0.0};
  const double u2 = u * u;
  const double w = 1.0 - u2;
  // g(u) = u G(u) + (15/48)(1 - u^2)^3, G = g' = 2F - 1 with F the biweight distribution function.
  const double G = 15.0 / 8.0 * u * (1.0 - 2.0 * u2 / 3.0 + u2 * u2 / 5.0);
  return {delta * (u * G + 15.0 / 48.0 * w * w * w), G, 15.0 / 8.0 * w * w / delta};
}

/// Returns the larger input bit-for-bit once the gap reaches 2 delta.
inline double smooth_max2(double a, double b, double delta)
{
  const double x = 0.5 * (a - b);
  if (std::abs(x) >= delta) return std::max(a, b);
  return 0.5 * (a + b) + smooth_abs(x, delta).value;
}

namespace detail {

inline double stage_width(std::size_t inputs, double eps)
{
  if (!(eps > 0.0)) fail(ErrorKind::ConfigError, "regularization width must be positive");
  return inputs > 1 ? eps / static_cast<double>(inputs - 1) : eps;
}

}  // namespace detail

/// Smooth max of the inputs; order-independent.
inline double regularized_max(std::vector<double> values, double eps)
{
  if (values.empty()) fail(ErrorKind::ConfigError, "regularized max of no inputs");
  const double delta = detail::stage_width(values.size(), eps);
  std::sort(values.begin(), values.end());
  double acc = values.front();
  for (std::size_t i = 1; i < values.size(); ++i) acc = smooth_max2(acc, values[i], delta);
  return acc;
}

/// Value, conjugate gradient (d/d zbar) and complex Hessian of a potential at one point.
struct Jet {
  double value = 0.0;
  Eigen::VectorXcd grad;
  HermMatrix hess;
};

/// The chain rule through M: the Hessian picks up (h''/4) w w* with w the difference of gradients.
inline Jet smooth_max2(const Jet& a, const Jet& b, double delta)
{
  const double x = 0.5 * (a.value - b.value);
  if (std::abs(x) >= delta) return x > 0.0 ? a : b;
  const SmoothAbs s = smooth_abs(x, delta);
  const double wa = 0.5 * (1.0 + s.d1);
  const double wb = 0.5 * (1.0 - s.d1);
  const Eigen::VectorXcd w = a.grad - b.grad;
  Jet out;
  out.value = 0.5 * (a.value + b.value) + s.value;
  out.grad = wa * a.grad + wb * b.grad;
  out.hess = hermitian_part(wa * a.hess + wb * b.hess + 0.25 * s.d2 * (w * w.adjoint()));
  return out;
}

inline Jet regularized_max(std::vector<Jet> jets, double eps)
{
  if (jets.empty()) fail(ErrorKind::ConfigError, "regularized max of no inputs");
  const double delta = detail::stage_width(jets.size(), eps);
  std::stable_sort(jets.begin(), jets.end(), [](const Jet& x, const Jet& y) { return x.value < y.value; });
  Jet acc = jets.front();
  for (std::size_t i = 1; i < jets.size(); ++i) acc = smooth_max2(acc, jets[i], delta);
  return acc;
}

/// Quadratic potential z* A z + 2 Re(b* z) + c on C^m, with z = x + i y from real coordinates
/// (x_1, y_1, ..., x_m, y_m).
struct QuadraticPotential {
  HermMatrix A;
  Eigen::VectorXcd b;
  double c = 0.0;

  static Eigen::VectorXcd complex_point(const std::vector<double>& x)
  {
    Eigen::VectorXcd z(static_cast<Eigen::Index>(x.size() / 2));
    for (Eigen::Index j = 0; j < z.size(); ++j) z(j) = cplx(x[2 * j], x[2 * j + 1]);
    return z;
  }

  Jet jet(const std::vector<double>& x) const
  {
    const Eigen::VectorXcd z = complex_point(x);
    Jet j;
    j.value = (z.adjoint() * A * z)(0).real() + 2.0 * b.dot(z).real() + c;
    j.grad = A * z + b;
    j.hess = A;
    return j;
  }
};

/// One glued input: a domain flag and a value at each point of a shared point list.
struct GluePiece {
  std::vector<char> domain;
  std::vector<double> values;
};

struct GlueResult {
  ChartField field;
  std::vector<int> active;  // inputs defined at each point
};

/// Points of each domain with an axis neighbour (inside the point list) outside that domain;
/// at each such point some other input must exceed this one by at least 2 eps.
inline void check_separation(const ChartGrid& g, const std::vector<Offset>& points, const std::vector<GluePiece>& pieces,
                             double eps)
{
  std::map<Offset, std::size_t> index;
  for (std::size_t i = 0; i < points.size(); ++i) index.emplace(points[i], i);
  for (std::size_t j = 0; j < pieces.size(); ++j) {
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (!pieces[j].domain[i]) continue;
      bool boundary = false;
      Offset nb = points[i];
      for (std::size_t a = 0; a < nb.size() && !boundary; ++a) {
        for (int s : {-1, 1}) {
          nb[a] += s;
          auto it = index.find(nb);
          nb[a] -= s;
          if (it != index.end() && !pieces[j].domain[it->second]) {
            boundary = true;
            break;
          }
        }
      }
      if (!boundary) continue;
      double best = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < pieces.size(); ++k)
        if (k != j && pieces[k].domain[i]) best = std::max(best, pieces[k].values[i]);
      if (!(best >= pieces[j].values[i] + 2.0 * eps)) {
        std::string where;
        for (double v : g.coordinates(points[i])) where += (where.empty() ? "" : ", ") + std::to_string(v);
        fail(ErrorKind::SeparationViolated, "input " + std::to_string(j) + " is not dominated by 2 eps on its boundary at (" +
                                                where + ")");
      }
    }
  }
}

/// Glued potential over a point list: the regularized max of the inputs defined at each point.
/// Points covered by no input take the chart floor.
inline GlueResult regularized_max(const ChartGrid& g, const std::vector<Offset>& points, const std::vector<GluePiece>& pieces,
                                  double eps, double floor = -1e12)
{
  if (pieces.empty()) fail(ErrorKind::ConfigError, "regularized max of no inputs");
  for (const auto& p : pieces)
    if (p.domain.size() != points.size() || p.values.size() != points.size())
      fail(ErrorKind::ConfigError, "glue input does not match the point list");
  check_separation(g, points, pieces, eps);
  const double delta = detail::stage_width(pieces.size(), eps);
  GlueResult out;
  out.field.points = points;
  out.field.values.resize(points.size());
  out.active.resize(points.size());
  std::vector<double> here;
  for (std::size_t i = 0; i < points.size(); ++i) {
    here.clear();
    for (const auto& p : pieces)
      if (p.domain[i]) here.push_back(p.values[i]);
    out.active[i] = static_cast<int>(here.size());
    if (here.empty()) {
      out.field.values[i] = floor;
      continue;
    }
    // Same per-stage width as the full fold, so the bound is eps wherever fewer inputs are live.
    std::sort(here.begin(), here.end());
    double acc = here.front();
    for (std::size_t k = 1; k < here.size(); ++k) acc = smooth_max2(acc, here[k], delta);
    out.field.values[i] = acc;
  }
  return out;
}

/// Largest Q (full order) of the glued Hessians over sample points, relative to a metric.
struct GlueAngleReport {
  double max_input_q = 0.0;
  double max_glued_q = 0.0;
  std::size_t points = 0;
  std::size_t blended = 0;  // points where the smoothing changed the Hessian
};

inline GlueAngleReport glued_angle_scan(const std::vector<QuadraticPotential>& inputs, const HermMatrix& metric,
                                        const std::vector<std::vector<double>>& samples, double eps)
{
  GlueAngleReport r;
  for (const auto& q : inputs) r.max_input_q = std::max(r.max_input_q, angle_of(AngleKind::Q, metric, q.A));
  for (const auto& x : samples) {
    std::vector<Jet> jets;
    for (const auto& q : inputs) jets.push_back(q.jet(x));
    const Jet m = regularized_max(jets, eps);
    r.max_glued_q = std::max(r.max_glued_q, angle_of(AngleKind::Q, metric, m.hess));
    bool plain = false;
    for (const auto& j : jets) plain = plain || (m.hess - j.hess).norm() == 0.0;
    if (!plain) ++r.blended;
    ++r.points;
  }
  return r;
}

inline nlohmann::json to_json(const GlueAngleReport& r)
{
  return {{"max_input_q", r.max_input_q}, {"max_glued_q", r.max_glued_q}, {"points", r.points}, {"blended", r.blended}};
}

}  // namespace dhym

#endif  // DHYM_REGULARIZED_MAX_HPP
