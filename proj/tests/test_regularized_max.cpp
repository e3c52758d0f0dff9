#include <gtest/gtest.h>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <memory>

#include "dhym/random.hpp"
#include "dhym/regularized_max.hpp"

using namespace dhym;

namespace {

// |x - t| integrated against the biweight of half-width delta.
double smoothed_abs_oracle(double x, double delta)
{
  auto f = [&](double t) {
    const double u = t / delta;
    return std::abs(x - t) * 15.0 / 16.0 * (1.0 - u * u) * (1.0 - u * u) / delta;
  };
  using boost::math::quadrature::gauss_kronrod;
  const double a = -delta;
  const double b = delta;
  const double c = std::clamp(x, a, b);
  double v = 0.0;
  if (c > a) v += gauss_kronrod<double, 61>::integrate(f, a, c, 0, 0.0);
  if (b > c) v += gauss_kronrod<double, 61>::integrate(f, c, b, 0, 0.0);
  return v;
}

std::vector<double> random_inputs(Rng& rng, int p, double spread)
{
  std::vector<double> v(p);
  for (auto& x : v) x = uniform(rng, -spread, spread);
  return v;
}

double plain_max(const std::vector<double>& v) { return *std::max_element(v.begin(), v.end()); }

QuadraticPotential random_quadratic(int m, double theta0, Rng& rng, double shift)
{
  QuadraticPotential q;
  q.A = form_with_spectrum(HermMatrix::Identity(m, m), spectrum_with_angle_sum(m, uniform(rng, 0.3, 0.95) * theta0, rng), rng);
  q.b = Eigen::VectorXcd::Zero(m);
  q.b(0) = shift;  // adds 2 shift x_1
  q.c = uniform(rng, -0.2, 0.2);
  return q;
}

}  // namespace

TEST(SmoothAbs, MatchesTheConvolutionIntegral)
{
  for (double delta : {0.01, 0.3, 2.0}) {
    for (double u : {-1.5, -1.0, -0.7, -0.2, 0.0, 0.1, 0.55, 0.99, 1.0, 3.0}) {
      const double x = u * delta;
      EXPECT_NEAR(smooth_abs(x, delta).value, smoothed_abs_oracle(x, delta), 1e-13 * (1.0 + std::abs(x)));
    }
    EXPECT_NEAR(smooth_abs(0.0, delta).value, 5.0 * delta / 16.0, 1e-15);
  }
}

TEST(SmoothAbs, DerivativesMatchFiniteDifferences)
{
  const double delta = 0.4;
  for (double x : {-0.39, -0.2, 0.0, 0.13, 0.35}) {
    const double e = 1e-5;
    const double d1 = (smooth_abs(x + e, delta).value - smooth_abs(x - e, delta).value) / (2 * e);
    const double d2 = (smooth_abs(x + e, delta).d1 - smooth_abs(x - e, delta).d1) / (2 * e);
    EXPECT_NEAR(smooth_abs(x, delta).d1, d1, 1e-8);
    EXPECT_NEAR(smooth_abs(x, delta).d2, d2, 1e-6);
  }
}

TEST(RegularizedMax, BoundsHoldOnRandomInputs)
{
  Rng rng(7);
  for (int trial = 0; trial < 100000; ++trial) {
    const int p = 1 + trial % 6;
    const double eps = uniform(rng, 1e-3, 1.0);
    const auto v = random_inputs(rng, p, uniform(rng, 0.0, 3.0) * eps);
    const double M = regularized_max(v, eps);
    ASSERT_GE(M, plain_max(v) - 1e-12) << trial;
    ASSERT_LE(M, plain_max(v) + eps + 1e-12) << trial;
  }
}

TEST(RegularizedMax, SeparatedTopInputIsReturnedExactly)
{
  Rng rng(8);
  const double eps = 0.05;
  EXPECT_EQ(regularized_max({1.0, 1.0 - 10 * eps}, eps), 1.0);
  for (int trial = 0; trial < 20000; ++trial) {
    const int p = 2 + trial % 5;
    auto v = random_inputs(rng, p, 1.0);
    const double top = uniform(rng, -1.0, 1.0);
    for (auto& x : v) x = std::min(x, top - 2.0 * eps - uniform(rng, 0.0, 0.5));
    v[trial % p] = top;
    ASSERT_EQ(regularized_max(v, eps), top) << trial;
  }
}

TEST(RegularizedMax, TiedInputsStayWithinEps)
{
  const double eps = 0.2;
  for (double a : {-3.0, 0.0, 1.7}) {
    const double M = regularized_max({a, a}, eps);
    EXPECT_GE(M, a);
    EXPECT_LE(M, a + eps);
    EXPECT_NEAR(M, a + 5.0 * eps / 16.0, 1e-14);
  }
}

TEST(RegularizedMax, SymmetricAndIdempotent)
{
  Rng rng(9);
  for (int trial = 0; trial < 5000; ++trial) {
    const int p = 1 + trial % 5;
    auto v = random_inputs(rng, p, 0.5);
    const double M = regularized_max(v, 0.3);
    std::shuffle(v.begin(), v.end(), rng);
    ASSERT_EQ(regularized_max(v, 0.3), M);
  }
  EXPECT_EQ(regularized_max(std::vector<double>{0.123}, 0.5), 0.123);
}

TEST(RegularizedMax, NondecreasingInEachInput)
{
  Rng rng(10);
  for (int trial = 0; trial < 20000; ++trial) {
    const int p = 2 + trial % 4;
    auto v = random_inputs(rng, p, 0.4);
    const double M = regularized_max(v, 0.25);
    v[trial % p] += uniform(rng, 0.0, 0.3);
    ASSERT_GE(regularized_max(v, 0.25), M - 1e-15) << trial;
  }
}

TEST(RegularizedMax, ConvexAlongSegments)
{
  Rng rng(11);
  for (int trial = 0; trial < 20000; ++trial) {
    const int p = 2 + trial % 4;
    const double eps = uniform(rng, 0.05, 1.0);
    const auto x = random_inputs(rng, p, eps);
    const auto y = random_inputs(rng, p, eps);
    const double t = uniform(rng);
    std::vector<double> z(p);
    for (int i = 0; i < p; ++i) z[i] = t * x[i] + (1 - t) * y[i];
    ASSERT_LE(regularized_max(z, eps), t * regularized_max(x, eps) + (1 - t) * regularized_max(y, eps) + 1e-12) << trial;
  }
}

TEST(RegularizedMax, RejectsEmptyInputAndNonpositiveWidth)
{
  EXPECT_THROW(regularized_max(std::vector<double>{}, 0.1), Error);
  EXPECT_THROW(regularized_max(std::vector<double>{1.0, 2.0}, 0.0), Error);
}

TEST(GluedJet, ChainRuleMatchesFiniteDifferences)
{
  // Complex derivatives from real ones: dbar_k = (d/dx_k + i d/dy_k)/2 and
  // d_j dbar_k = (d/dx_j - i d/dy_j)(d/dx_k + i d/dy_k)/4.
  Rng rng(12);
  const int m = 2;
  const double eps = 0.4;
  std::vector<QuadraticPotential> q = {random_quadratic(m, 2.0, rng, 0.3), random_quadratic(m, 2.0, rng, -0.3)};
  auto value = [&](const std::vector<double>& x) {
    std::vector<double> v;
    for (const auto& p : q) v.push_back(p.jet(x).value);
    return regularized_max(v, eps);
  };
  int blended = 0;
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<double> x(2 * m);
    for (auto& c : x) c = uniform(rng, -0.5, 0.5);
    const Jet j = regularized_max(std::vector<Jet>{q[0].jet(x), q[1].jet(x)}, eps);
    EXPECT_NEAR(j.value, value(x), 1e-14);
    if (std::abs(q[0].jet(x).value - q[1].jet(x).value) >= 2 * eps) continue;
    ++blended;
    const double e = 1e-4;
    auto shifted = [&](int a, double da, int b, double db) {
      auto y = x;
      y[a] += da;
      y[b] += db;
      return value(y);
    };
    Eigen::MatrixXd d2(2 * m, 2 * m);
    Eigen::VectorXd d1(2 * m);
    for (int a = 0; a < 2 * m; ++a) {
      d1(a) = (shifted(a, e, a, 0) - shifted(a, -e, a, 0)) / (2 * e);
      for (int b = 0; b < 2 * m; ++b)
        d2(a, b) = (shifted(a, e, b, e) - shifted(a, e, b, -e) - shifted(a, -e, b, e) + shifted(a, -e, b, -e)) / (4 * e * e);
    }
    for (int k = 0; k < m; ++k) {
      EXPECT_NEAR(std::abs(j.grad(k) - 0.5 * cplx(d1(2 * k), d1(2 * k + 1))), 0.0, 1e-7);
      for (int l = 0; l < m; ++l) {
        const cplx h = 0.25 * (cplx(d2(2 * l, 2 * k), 0.0) + cplx(0.0, 1.0) * d2(2 * l, 2 * k + 1) -
                               cplx(0.0, 1.0) * d2(2 * l + 1, 2 * k) + d2(2 * l + 1, 2 * k + 1));
        EXPECT_NEAR(std::abs(j.hess(k, l) - h), 0.0, 5e-5) << "entry " << k << l;
      }
    }
  }
  EXPECT_GT(blended, 5);
}

TEST(GluedJet, SingleInputIsUnchanged)
{
  Rng rng(13);
  const QuadraticPotential q = random_quadratic(2, 1.5, rng, 0.1);
  const Jet a = q.jet({0.1, -0.2, 0.3, 0.05});
  const Jet b = regularized_max(std::vector<Jet>{a}, 0.1);
  EXPECT_EQ(b.value, a.value);
  EXPECT_EQ((b.hess - a.hess).norm(), 0.0);
}

TEST(Gluing, TwoChartQuadraticKeepsTheAngleBound)
{
  // Two potentials on overlapping half-spaces of the unit ball in C^2: the first wins for
  // x_1 < -1/2, the second for x_1 > 1/2, and they are blended in between.
  Rng rng(14);
  const int m = 2;
  const double theta0 = 2.2;
  const double eps = 0.25;
  const auto grid = std::make_shared<ChartGrid>(m, 0.25, 1.0 / 12);
  const auto& points = grid->ball(1.0);
  for (int trial = 0; trial < 5; ++trial) {
    QuadraticPotential q1 = random_quadratic(m, theta0, rng, -2.0);
    QuadraticPotential q2 = random_quadratic(m, theta0, rng, 2.0);
    std::vector<GluePiece> pieces(2);
    std::vector<std::vector<double>> samples;
    for (const Offset& k : points) {
      const auto x = grid->coordinates(k);
      samples.push_back(x);
      pieces[0].domain.push_back(x[0] < 0.5 + 1e-9);
      pieces[1].domain.push_back(x[0] > -0.5 - 1e-9);
      pieces[0].values.push_back(q1.jet(x).value);
      pieces[1].values.push_back(q2.jet(x).value);
    }
    const GlueResult glued = regularized_max(*grid, points, pieces, eps);
    for (std::size_t i = 0; i < points.size(); ++i) {
      const double top = std::max(pieces[0].domain[i] ? pieces[0].values[i] : -1e300,
                                  pieces[1].domain[i] ? pieces[1].values[i] : -1e300);
      ASSERT_GE(glued.field.values[i], top);
      ASSERT_LE(glued.field.values[i], top + eps + 1e-12);
    }
    const GlueAngleReport r = glued_angle_scan({q1, q2}, HermMatrix::Identity(m, m), samples, eps);
    EXPECT_LT(r.max_input_q, theta0);
    EXPECT_LT(r.max_glued_q, theta0 + 1e-6) << "trial " << trial;
    EXPECT_GT(r.blended, 0u);
  }
}

TEST(Gluing, UndominatedBoundaryIsRejected)
{
  const auto grid = std::make_shared<ChartGrid>(1, 0.25, 1.0 / 16);
  const auto& points = grid->ball(1.0);
  std::vector<GluePiece> pieces(2);
  for (const Offset& k : points) {
    const auto x = grid->coordinates(k);
    pieces[0].domain.push_back(x[0] < 0.5);
    pieces[1].domain.push_back(x[0] > -0.5);
    pieces[0].values.push_back(0.0);
    pieces[1].values.push_back(0.1 * x[0]);
  }
  try {
    regularized_max(*grid, points, pieces, 0.1);
    FAIL() << "expected SeparationViolated";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::SeparationViolated);
    EXPECT_NE(std::string(e.what()).find('('), std::string::npos);
  }
}
