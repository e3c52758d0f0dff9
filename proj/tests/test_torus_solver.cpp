#include <gtest/gtest.h>

#include <cmath>

#include "dhym/form_algebra.hpp"
#include "dhym/random.hpp"
#include "dhym/torus_solver.hpp"

using namespace dhym;

namespace {

HermMatrix scalar(double v)
{
  HermMatrix h(1, 1);
  h(0, 0) = v;
  return h;
}

HermMatrix chi2()
{
  HermMatrix c(2, 2);
  c << 1.0, cplx(0.2, 0.1), cplx(0.2, -0.1), 1.5;
  return c;
}

TorusProblem manufactured_m1()
{
  TorusProblem p;
  p.m = 1;
  p.grid = {256, 256};
  p.chi = scalar(1.0);
  p.theta0 = 1.0;
  p.Theta0 = 1.3;
  p.omega0 = scalar(cot(1.0) + 0.5);
  return p;
}

TwistSpec m1_modes(double s = 1.0)
{
  TwistSpec t;
  t.kind = TwistSpec::Kind::Manufactured;
  t.modes = {{0.1 * s, false, {1, 0}}, {0.05 * s, true, {0, 2}}};
  return t;
}

TorusProblem manufactured_m2(TorusGrid& grid, double amp)
{
  TorusProblem p;
  p.m = 2;
  p.grid = grid.dims();
  p.chi = chi2();
  p.theta0 = 1.2;
  p.Theta0 = 1.5;
  p.omega0 = 1.3 * cot(0.6) * p.chi;
  TwistSpec t;
  t.kind = TwistSpec::Kind::Manufactured;
  t.modes = {{0.05 * amp, false, {1, 0, 0, 0}}, {0.03 * amp, true, {0, 0, 0, 1}}, {0.02 * amp, false, {1, 0, 1, 0}},
             {0.02 * amp, true, {0, 1, 1, 0}}};
  materialize_twist(grid, p, t);
  return p;
}

}  // namespace

TEST(TorusGrid, HessianOfCosineIsQuarterLaplacian)
{
  TorusGrid grid(1, {16, 16});
  const RealField phi = grid.sample([](const std::vector<double>& x) { return std::cos(x[0]); });
  const MatrixField h = complex_hessian(grid, phi);
  for (std::size_t p = 0; p < grid.size(); ++p) {
    const double x = grid.coordinates(p)[0];
    EXPECT_NEAR(h(p, 0, 0).real(), -0.25 * std::cos(x), 1e-13);
    EXPECT_NEAR(h(p, 0, 0).imag(), 0.0, 1e-15);
  }
}

TEST(TorusGrid, PluriharmonicAndConstantPotentialsHaveNoHessian)
{
  TorusGrid grid(2, {8, 8, 8, 8});
  // Constants are the only periodic pluriharmonic functions.
  const RealField phi(grid.size(), 3.7);
  const MatrixField h = complex_hessian(grid, phi);
  for (const cplx& v : h.data) EXPECT_NEAR(std::abs(v), 0.0, 1e-13);
  const MatrixField w = hessian_form(grid, phi, chi2());
  for (std::size_t p = 0; p < grid.size(); p += 97) EXPECT_NEAR((w.at(p) - chi2()).norm(), 0.0, 1e-13);
}

TEST(TorusGrid, MixedHessianMatchesFiniteOracle)
{
  // phi = cos(x1 + y2): d/dz1 d/dzbar2 = 1/4 (dx1 - i dy1)(dx2 + i dy2) phi = (i/4) dx1 dy2 phi.
  TorusGrid grid(2, {8, 8, 8, 8});
  const RealField phi = grid.sample([](const std::vector<double>& x) { return std::cos(x[0] + x[3]); });
  const MatrixField h = complex_hessian(grid, phi);
  for (std::size_t p = 0; p < grid.size(); p += 13) {
    const auto x = grid.coordinates(p);
    const double c = std::cos(x[0] + x[3]);
    EXPECT_NEAR(std::abs(h(p, 0, 1) - cplx(0.0, -0.25 * c)), 0.0, 1e-13);
    EXPECT_NEAR(std::abs(h(p, 1, 0) - std::conj(h(p, 0, 1))), 0.0, 1e-15);
    EXPECT_NEAR(h(p, 0, 0).real(), -0.25 * c, 1e-13);
    EXPECT_NEAR(h(p, 1, 1).real(), -0.25 * c, 1e-13);
  }
}

TEST(TorusGrid, RejectsCoarseAndOversizedGrids)
{
  EXPECT_THROW(TorusGrid(1, {2, 8}), Error);
  EXPECT_THROW(TorusGrid(2, {32, 8, 8, 8}), Error);
  EXPECT_THROW(TorusGrid(3, {8, 8, 8, 8, 8, 8}), Error);
}

TEST(TwistOperator, ValueAgreesWithAngleFormAndFormAlgebra)
{
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const int m = 1 + trial % 2;
    const HermMatrix chi = random_posdef(m, rng);
    const HermMatrix omega = random_hermitian(m, rng, 2.0);
    const double theta0 = uniform(rng, 0.3, 2.8);
    const TwistOperator op(chi, theta0);
    const double direct = op.value(omega);
    EXPECT_NEAR(direct, op.value_by_angle(omega), 1e-10 * (1.0 + std::abs(direct)));
    const ComplexForm cp = complex_power(PPForm::from_hermitian(omega), PPForm::from_hermitian(chi), m);
    const PPForm mix = cp.re - cp.im * cot(theta0);
    EXPECT_NEAR(direct, pair_top(mix, PPForm::from_hermitian(chi)), 1e-10 * (1.0 + std::abs(direct)));
  }
}

TEST(TwistOperator, LinearizationMatchesDirectionalDerivative)
{
  Rng rng(11);
  for (int trial = 0; trial < 40; ++trial) {
    const int m = 1 + trial % 2;
    const HermMatrix chi = random_posdef(m, rng);
    const HermMatrix omega = random_hermitian(m, rng, 2.0);
    const HermMatrix dir = random_hermitian(m, rng);
    const TwistOperator op(chi, uniform(rng, 0.3, 2.8));
    const double h = 1e-6;
    const double fd = (op.value(omega + h * dir) - op.value(omega - h * dir)) / (2 * h);
    const double lin = (op.linearization(omega) * dir).trace().real();
    EXPECT_NEAR(fd, lin, 1e-6 * (1.0 + std::abs(lin)));
  }
}

TEST(Residual, CriticalAngleGivesMinusTwist)
{
  TorusGrid grid(2, {4, 4, 4, 4});
  TorusProblem p;
  p.m = 2;
  p.grid = grid.dims();
  p.chi = chi2();
  p.theta0 = 1.1;
  p.Theta0 = 1.4;
  p.omega0 = cot(p.theta0 / 2) * p.chi;
  p.f.assign(grid.size(), 0.25);
  const ResidualField r = residual(grid, RealField(grid.size(), 0.0), p);
  for (double v : r.values) EXPECT_NEAR(v, -0.25, 1e-12);
  EXPECT_EQ(r.cone_violations, 0u);
}

TEST(Residual, ManufacturedTwistVanishesAtReference)
{
  TorusGrid grid(2, {8, 8, 8, 8});
  const TorusProblem p = manufactured_m2(grid, 1.0);
  const ResidualField r = residual(grid, *p.reference_phi, p);
  EXPECT_LE(sup_norm(r.values), 1e-13);
}

TEST(Residual, ConeExitIsFlaggedNotThrown)
{
  TorusGrid grid(1, {8, 8});
  TorusProblem p;
  p.m = 1;
  p.grid = grid.dims();
  p.chi = scalar(1.0);
  p.theta0 = 1.0;
  p.Theta0 = 1.2;
  p.omega0 = scalar(-3.0);  // arccot(-3) is close to pi
  p.f.assign(grid.size(), 0.0);
  const ResidualField r = residual(grid, RealField(grid.size(), 0.0), p);
  EXPECT_EQ(r.cone_violations, grid.size());
  EXPECT_LT(r.margin_Q, 0.0);
}

TEST(Compatibility, GapVanishesForRandomPotentials)
{
  TorusGrid grid(2, {8, 8, 8, 8});
  TorusProblem p;
  p.m = 2;
  p.grid = grid.dims();
  p.chi = chi2();
  p.theta0 = 1.2;
  p.Theta0 = 1.5;
  p.omega0 = 2.0 * p.chi;
  p.f = easy_twist(grid, p);
  EXPECT_NEAR(compatibility_gap(grid, RealField(grid.size(), 0.0), p), 0.0, 1e-10);
  Rng rng(3);
  RealField phi(grid.size());
  for (double& v : phi) v = 0.3 * gaussian(rng);
  EXPECT_NEAR(compatibility_gap(grid, phi, p), 0.0, 1e-10);

  for (double& v : p.f) v += 1.0;
  const double expected = grid.volume() * p.chi.determinant().real();
  EXPECT_NEAR(compatibility_gap(grid, RealField(grid.size(), 0.0), p), expected, 1e-9 * expected);
}

TEST(Newton, TrivialProblemReturnsZeroImmediately)
{
  TorusGrid grid(1, {16, 16});
  TorusProblem p;
  p.m = 1;
  p.grid = grid.dims();
  p.chi = scalar(2.0);
  p.theta0 = 0.8;
  p.Theta0 = 1.1;
  p.omega0 = cot(0.8) * p.chi;
  p.f.assign(grid.size(), 0.0);
  auto [phi, rep] = newton_solve(grid, p, RealField(grid.size(), 0.0));
  EXPECT_TRUE(rep.converged);
  EXPECT_LE(rep.iterates.size(), 2u);
  EXPECT_LE(sup_norm(phi), 1e-14);
}

TEST(Newton, RecoversManufacturedPotentialOnePlane)
{
  TorusGrid grid(1, {256, 256});
  TorusProblem p = manufactured_m1();
  materialize_twist(grid, p, m1_modes());
  auto [phi, rep] = newton_solve(grid, p, RealField(grid.size(), 0.0));
  ASSERT_TRUE(rep.converged);
  EXPECT_LE(*rep.error_sup, 1e-6);
  EXPECT_LE(static_cast<int>(rep.iterates.size()) - 1, 25);
  for (const auto& it : rep.iterates) {
    EXPECT_LE(std::abs(it.compatibility_gap), 1e-10);
    EXPECT_GT(it.margin_P, 0.0);
    EXPECT_GT(it.margin_Q, 0.0);
  }
}

TEST(Newton, RecoversManufacturedPotentialTwoPlanes)
{
  TorusGrid grid(2, {12, 12, 12, 12});
  const TorusProblem p = manufactured_m2(grid, 1.0);
  auto [phi, rep] = newton_solve(grid, p, RealField(grid.size(), 0.0));
  ASSERT_TRUE(rep.converged);
  EXPECT_LE(*rep.error_sup, 1e-4);
  for (const auto& it : rep.iterates) {
    EXPECT_LE(std::abs(it.compatibility_gap), 1e-10);
    EXPECT_GT(it.margin_P, 0.0);
    EXPECT_GT(it.margin_Q, 0.0);
  }
  // Quadratic convergence: e_{k+1} / e_k^2 stays bounded once errors are small.
  for (std::size_t k = 1; k + 1 < rep.iterates.size(); ++k) {
    const double ek = *rep.iterates[k].error_sup;
    const double ek1 = *rep.iterates[k + 1].error_sup;
    if (ek < 1e-2 && ek1 > 1e-12) {
      EXPECT_LE(ek1 / (ek * ek), 50.0);
    }
  }
}

TEST(Newton, StartOutsideConeIsRefused)
{
  TorusGrid grid(1, {8, 8});
  TorusProblem p;
  p.m = 1;
  p.grid = grid.dims();
  p.chi = scalar(1.0);
  p.theta0 = 1.0;
  p.Theta0 = 1.2;
  p.omega0 = scalar(-3.0);
  p.f.assign(grid.size(), 0.0);
  try {
    newton_solve(grid, p, RealField(grid.size(), 0.0));
    FAIL() << "expected a refusal";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::HypothesisViolated);
  }
}

TEST(Newton, IncompatibleTwistHitsIterationCap)
{
  TorusGrid grid(1, {16, 16});
  TorusProblem p = manufactured_m1();
  p.grid = grid.dims();
  materialize_twist(grid, p, m1_modes());
  for (double& v : p.f) v += 0.1;
  NewtonOptions opt;
  opt.max_iter = 5;
  try {
    newton_solve(grid, p, RealField(grid.size(), 0.0), opt);
    FAIL() << "expected a failure";
  } catch (const Error& e) {
    EXPECT_TRUE(e.kind() == ErrorKind::MaxIterations || e.kind() == ErrorKind::ConeEscape);
  }
}

TEST(ContinuityPath, TargetEqualToEasyIsSingleSolve)
{
  TorusGrid grid(1, {16, 16});
  TorusProblem p = manufactured_m1();
  p.grid = grid.dims();
  p.f = easy_twist(grid, p);
  auto [phi, rep] = continuity_path(grid, p, 1);
  ASSERT_EQ(rep.steps.size(), 1u);
  EXPECT_LE(sup_norm(phi), 1e-14);
}

TEST(ContinuityPath, NegativeTwistStageIsRejectedBeforeSolving)
{
  TorusGrid grid(1, {16, 16});
  TorusProblem p = manufactured_m1();
  p.grid = grid.dims();
  p.f = grid.sample([](const std::vector<double>& x) { return -0.2 + 0.0 * x[0]; });
  try {
    continuity_path(grid, p, 4);
    FAIL() << "expected a sign refusal";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::TwistSignViolated);
  }
}

TEST(ContinuityPath, LargeAmplitudeReachedInTenSteps)
{
  TorusGrid grid(2, {12, 12, 12, 12});
  const TorusProblem p = manufactured_m2(grid, 9.0);
  auto [phi, rep] = continuity_path(grid, p, 10);
  EXPECT_EQ(rep.steps.size(), 10u);
  EXPECT_LE(*rep.final_solve.error_sup, 1e-4);
}

TEST(ContinuityPath, GenericIntermediateTwistsConverge)
{
  // Interpolated twists carry Nyquist-only content no potential can cancel; the driver
  // projects it out and reports it instead of stalling.
  TorusGrid grid(2, {12, 12, 12, 12});
  TorusProblem p = manufactured_m2(grid, 1.0);
  p.theta0 = 0.6;
  p.Theta0 = 0.9;
  p.omega0 = 6.0 * p.chi;
  TwistSpec t;
  t.kind = TwistSpec::Kind::Manufactured;
  t.modes = {{0.5, false, {2, 0, 1, 0}}, {0.4, true, {0, 3, 0, 1}}, {0.3, false, {1, 1, 2, 0}}};
  materialize_twist(grid, p, t);
  auto [phi, rep] = continuity_path(grid, p, 10);
  EXPECT_LE(*rep.final_solve.error_sup, 1e-4);
  for (const auto& st : rep.steps) EXPECT_LE(st.residual_sup, 1e-10);
}

TEST(Twist, CosineCatalogIsCompatible)
{
  TorusGrid grid(1, {32, 32});
  TorusProblem p = manufactured_m1();
  p.grid = grid.dims();
  TwistSpec t;
  t.kind = TwistSpec::Kind::Cosine;
  t.modes = {{0.2, false, {1, 1}}, {0.1, true, {0, 3}}};
  materialize_twist(grid, p, t);
  EXPECT_NEAR(compatibility_gap(grid, RealField(grid.size(), 0.0), p), 0.0, 1e-11);
  auto [phi, rep] = newton_solve(grid, p, RealField(grid.size(), 0.0));
  EXPECT_TRUE(rep.converged);
}
