#ifndef DHYM_TORUS_SOLVER_HPP
#define DHYM_TORUS_SOLVER_HPP

// Twisted dHYM on the flat torus [0, 2 pi)^{2m}, m in {1, 2}:
//
//   G(omega) := Re det(chi^{-1} omega + i) - cot(theta0) Im det(chi^{-1} omega + i) = f,
//   omega = omega0 + i ddbar phi,
//
// where det(chi^{-1} omega + i) = prod_j (lambda_j + i) is the top-degree ratio
// (omega + i chi)^m / chi^m. Real axes are ordered x1, y1, x2, y2 with z_j = x_j + i y_j, and
// derivatives are spectral: d/dz_j d/dzbar_l has symbol -1/4 zeta_j conj(zeta_l) with
// zeta_j = kx_j - i ky_j. Nyquist wavenumbers are dropped from zeta so that the symbol stays
// Hermitian and rank one; the latter makes the grid integral of G independent of phi.

#include <fftw3.h>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <complex>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "dhym/error.hpp"
#include "dhym/hermitian_core.hpp"
#include "dhym/linalg.hpp"

namespace dhym {

using RealField = std::vector<double>;

/// Periodic real grid with FFT plans and the first-derivative symbols zeta_j.
class TorusGrid {
 public:
  TorusGrid(int m, std::vector<int> dims) : m_(m), dims_(std::move(dims))
  {
    if (m_ < 1 || m_ > 2) fail(ErrorKind::HypothesisViolated, "torus solver supports m = 1 or 2");
    if (static_cast<int>(dims_.size()) != 2 * m_) fail(ErrorKind::ConfigError, "grid needs 2m axis sizes");
    size_ = 1;
    for (int d : dims_) {
      if (d < 4) fail(ErrorKind::ResolutionError, "grid sizes must be >= 4 per axis");
      size_ *= static_cast<std::size_t>(d);
    }
    if (m_ == 2 && *std::max_element(dims_.begin(), dims_.end()) > 16)
      fail(ErrorKind::ResolutionError, "m = 2 grids are capped at 16 points per axis");
    cell_volume_ = 1.0;
    for (int d : dims_) cell_volume_ *= 2 * kPi / d;

    buf_in_.reset(fftw_alloc_complex(size_));
    buf_out_.reset(fftw_alloc_complex(size_));
    forward_ = fftw_plan_dft(2 * m_, dims_.data(), buf_in_.get(), buf_out_.get(), FFTW_FORWARD, FFTW_ESTIMATE);
    backward_ = fftw_plan_dft(2 * m_, dims_.data(), buf_in_.get(), buf_out_.get(), FFTW_BACKWARD, FFTW_ESTIMATE);

    zeta_.assign(m_, std::vector<cplx>(size_));
    std::vector<int> idx(2 * m_, 0);
    for (std::size_t p = 0; p < size_; ++p) {
      for (int j = 0; j < m_; ++j)
        zeta_[j][p] = cplx(derivative_wavenumber(2 * j, idx[2 * j]), -derivative_wavenumber(2 * j + 1, idx[2 * j + 1]));
      advance(idx);
    }
  }

  TorusGrid(const TorusGrid&) = delete;
  TorusGrid& operator=(const TorusGrid&) = delete;

  ~TorusGrid()
  {
    fftw_destroy_plan(forward_);
    fftw_destroy_plan(backward_);
  }

  int m() const { return m_; }
  const std::vector<int>& dims() const { return dims_; }
  std::size_t size() const { return size_; }
  double cell_volume() const { return cell_volume_; }
  double volume() const { return cell_volume_ * static_cast<double>(size_); }

  /// Real coordinates (x1, y1, ...) of grid point p.
  std::vector<double> coordinates(std::size_t p) const
  {
    std::vector<double> out(2 * m_);
    for (int a = 2 * m_ - 1; a >= 0; --a) {
      out[a] = 2 * kPi * static_cast<double>(p % dims_[a]) / dims_[a];
      p /= dims_[a];
    }
    return out;
  }

  /// Samples fn(coordinates) on the grid.
  RealField sample(const std::function<double(const std::vector<double>&)>& fn) const
  {
    RealField out(size_);
    for (std::size_t p = 0; p < size_; ++p) out[p] = fn(coordinates(p));
    return out;
  }

  std::vector<cplx> forward(const RealField& f) const
  {
    for (std::size_t p = 0; p < size_; ++p) {
      buf_in_.get()[p][0] = f[p];
      buf_in_.get()[p][1] = 0.0;
    }
    fftw_execute(forward_);
    std::vector<cplx> out(size_);
    for (std::size_t p = 0; p < size_; ++p) out[p] = cplx(buf_out_.get()[p][0], buf_out_.get()[p][1]);
    return out;
  }

  /// Inverse transform including the 1/N normalization.
  std::vector<cplx> backward(const std::vector<cplx>& spec) const
  {
    for (std::size_t p = 0; p < size_; ++p) {
      buf_in_.get()[p][0] = spec[p].real();
      buf_in_.get()[p][1] = spec[p].imag();
    }
    fftw_execute(backward_);
    const double scale = 1.0 / static_cast<double>(size_);
    std::vector<cplx> out(size_);
    for (std::size_t p = 0; p < size_; ++p) out[p] = cplx(buf_out_.get()[p][0], buf_out_.get()[p][1]) * scale;
    return out;
  }

  const cplx& zeta(int j, std::size_t p) const { return zeta_[j][p]; }

  /// Symbol of d^2/dz_j dzbar_l at frequency index p.
  cplx hessian_symbol(int j, int l, std::size_t p) const { return -0.25 * zeta_[j][p] * std::conj(zeta_[l][p]); }

  /// True at nonzero frequencies the Hessian annihilates (every axis at 0 or Nyquist).
  bool unreachable(std::size_t p) const
  {
    if (p == 0) return false;
    for (int j = 0; j < m_; ++j)
      if (zeta_[j][p] != cplx(0.0)) return false;
    return true;
  }

  /// Splits a field into the part the Hessian can reach and the Nyquist remainder.
  std::pair<RealField, RealField> split_reachable(const RealField& f) const
  {
    std::vector<cplx> spec = forward(f);
    std::vector<cplx> rest(size_, cplx(0.0));
    for (std::size_t p = 0; p < size_; ++p)
      if (unreachable(p)) std::swap(spec[p], rest[p]);
    const std::vector<cplx> a = backward(spec);
    const std::vector<cplx> b = backward(rest);
    RealField ra(size_), rb(size_);
    for (std::size_t p = 0; p < size_; ++p) {
      ra[p] = a[p].real();
      rb[p] = b[p].real();
    }
    return {ra, rb};
  }

 private:
  struct FftwFree {
    void operator()(fftw_complex* p) const { fftw_free(p); }
  };

  double derivative_wavenumber(int axis, int i) const
  {
    const int n = dims_[axis];
    if (2 * i == n) return 0.0;
    return i < n / 2 + (n % 2) ? i : i - n;
  }

  void advance(std::vector<int>& idx) const
  {
    for (int a = 2 * m_ - 1; a >= 0; --a) {
      if (++idx[a] < dims_[a]) return;
      idx[a] = 0;
    }
  }

  int m_;
  std::vector<int> dims_;
  std::size_t size_ = 0;
  double cell_volume_ = 0.0;
  std::unique_ptr<fftw_complex, FftwFree> buf_in_;
  std::unique_ptr<fftw_complex, FftwFree> buf_out_;
  fftw_plan forward_ = nullptr;
  fftw_plan backward_ = nullptr;
  std::vector<std::vector<cplx>> zeta_;
};

/// Hermitian m x m matrix per grid point, stored point-major.
struct MatrixField {
  int m = 0;
  std::vector<cplx> data;

  std::size_t points() const { return m == 0 ? 0 : data.size() / (m * m); }
  cplx& operator()(std::size_t p, int j, int l) { return data[(p * m + j) * m + l]; }
  const cplx& operator()(std::size_t p, int j, int l) const { return data[(p * m + j) * m + l]; }
  HermMatrix at(std::size_t p) const
  {
    HermMatrix h(m, m);
    for (int j = 0; j < m; ++j)
      for (int l = 0; l < m; ++l) h(j, l) = (*this)(p, j, l);
    return h;
  }
};

/// Spectral i ddbar phi as a matrix field (no background).
inline MatrixField complex_hessian(const TorusGrid& grid, const RealField& phi)
{
  const int m = grid.m();
  const std::size_t n = grid.size();
  MatrixField h{m, std::vector<cplx>(n * m * m)};
  const std::vector<cplx> spec = grid.forward(phi);
  std::vector<cplx> tmp(n);
  for (int j = 0; j < m; ++j)
    for (int l = j; l < m; ++l) {
      for (std::size_t p = 0; p < n; ++p) tmp[p] = grid.hessian_symbol(j, l, p) * spec[p];
      const std::vector<cplx> vals = grid.backward(tmp);
      for (std::size_t p = 0; p < n; ++p) {
        if (j == l) {
          h(p, j, j) = cplx(vals[p].real(), 0.0);
        } else {
          h(p, j, l) = vals[p];
          h(p, l, j) = std::conj(vals[p]);
        }
      }
    }
  return h;
}

/// Twist catalog entry: f = constant, f = G(omega0) + sum of cosine modes, manufactured from a
/// reference potential, or a raw grid.
struct Mode {
  double amplitude = 0.0;
  bool sine = false;
  std::vector<int> k;  // one integer per real axis
};

inline double eval_modes(const std::vector<Mode>& modes, const std::vector<double>& x)
{
  double v = 0.0;
  for (const auto& md : modes) {
    double phase = 0.0;
    for (std::size_t a = 0; a < md.k.size(); ++a) phase += md.k[a] * x[a];
    v += md.amplitude * (md.sine ? std::sin(phase) : std::cos(phase));
  }
  return v;
}

struct TwistSpec {
  enum class Kind { Constant, Cosine, Manufactured, Grid } kind = Kind::Constant;
  double constant = 0.0;
  std::vector<Mode> modes;      // cosine perturbation or manufactured potential
  std::string grid_path;        // raw dump (one value per line, grid order)
};

struct TorusProblem {
  int m = 1;
  std::vector<int> grid;
  HermMatrix omega0;
  HermMatrix chi;
  double theta0 = kPi / 2;
  double Theta0 = kPi / 2;
  RealField f;
  std::optional<RealField> reference_phi;  // set for manufactured twists
  double twist_floor = 0.0;                // the constant c allowed below zero when m >= 4
  double cone_margin = 1e-3;
};

struct PointAngles {
  double P = 0.0;
  double Q = 0.0;
};

namespace detail {

/// Eigenvalues of chi^{-1} w for a 1x1 or 2x2 Hermitian pair, chi already reduced to
/// its inverse square root `r`.
inline std::array<double, 2> reduced_eigenvalues(const HermMatrix& reduced)
{
  if (reduced.rows() == 1) return {reduced(0, 0).real(), 0.0};
  const double a = reduced(0, 0).real();
  const double d = reduced(1, 1).real();
  const double b = std::abs(reduced(0, 1));
  const double mid = 0.5 * (a + d);
  const double rad = std::hypot(0.5 * (a - d), b);
  return {mid - rad, mid + rad};
}

}  // namespace detail

/// Pointwise evaluator for G and its linearization at fixed (chi, theta0).
class TwistOperator {
 public:
  TwistOperator(const HermMatrix& chi, double theta0)
      : m_(static_cast<int>(chi.rows())), theta0_(theta0), cot_(cot(theta0)), reduction_(chi)
  {
    chi_inv_ = chi.inverse();
    det_chi_ = chi.determinant().real();
  }

  int m() const { return m_; }
  double det_chi() const { return det_chi_; }

  cplx det_m(const HermMatrix& omega) const
  {
    const HermMatrix mm = chi_inv_ * omega + cplx(0.0, 1.0) * HermMatrix::Identity(m_, m_);
    return mm.determinant();
  }

  double value(const HermMatrix& omega) const
  {
    const cplx d = det_m(omega);
    return d.real() - cot_ * d.imag();
  }

  /// Hermitian D with dG = tr(D d omega) for Hermitian d omega.
  HermMatrix linearization(const HermMatrix& omega) const
  {
    const HermMatrix mm = chi_inv_ * omega + cplx(0.0, 1.0) * HermMatrix::Identity(m_, m_);
    const cplx d = mm.determinant();
    const HermMatrix full = cplx(1.0, cot_) * d * mm.inverse() * chi_inv_;
    return hermitian_part(full);
  }

  PointAngles angles(const HermMatrix& omega) const
  {
    const HermMatrix red = reduction_.reduce(omega);
    PointAngles a;
    if (m_ == 1) {
      a.Q = arccot(red(0, 0).real());
      a.P = 0.0;
    } else {
      const auto ev = detail::reduced_eigenvalues(red);
      a.P = arccot(ev[0]);
      a.Q = a.P + arccot(ev[1]);
    }
    return a;
  }

  /// The same quantity written through the angle sum: prod sqrt(1+l^2) sin(theta0 - Q)/sin(theta0).
  double value_by_angle(const HermMatrix& omega) const
  {
    const RealVector ev = reduction_.eigenvalues(omega);
    double mag = 1.0;
    double s = 0.0;
    for (int i = 0; i < ev.size(); ++i) {
      mag *= std::sqrt(1.0 + ev(i) * ev(i));
      s += arccot(ev(i));
    }
    return mag * std::sin(theta0_ - s) / std::sin(theta0_);
  }

 private:
  int m_;
  double theta0_;
  double cot_;
  MetricReduction reduction_;
  HermMatrix chi_inv_;
  double det_chi_ = 1.0;
};

/// omega0 + i ddbar phi.
inline MatrixField hessian_form(const TorusGrid& grid, const RealField& phi, const HermMatrix& omega0)
{
  MatrixField h = complex_hessian(grid, phi);
  const int m = grid.m();
  for (std::size_t p = 0; p < grid.size(); ++p)
    for (int j = 0; j < m; ++j)
      for (int l = 0; l < m; ++l) h(p, j, l) += omega0(j, l);
  return h;
}

struct ResidualField {
  RealField values;            // G - f
  double unresolved_sup = 0.0; // Nyquist-only part of G - f, set by the Newton driver
  std::size_t cone_violations = 0;
  double margin_P = 0.0;       // min over points of (theta0 + cone_margin - P)
  double margin_Q = 0.0;       // min over points of (Theta0 - Q)
};

inline double sup_norm(const RealField& v)
{
  double s = 0.0;
  for (double x : v) s = std::max(s, std::abs(x));
  return s;
}

inline double l2_norm(const RealField& v)
{
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

/// Neumaier-compensated sum.
inline double stable_sum(const RealField& v)
{
  double sum = 0.0;
  double comp = 0.0;
  for (double x : v) {
    const double t = sum + x;
    comp += std::abs(sum) >= std::abs(x) ? (sum - t) + x : (x - t) + sum;
    sum = t;
  }
  return sum + comp;
}

inline double mean(const RealField& v) { return stable_sum(v) / static_cast<double>(v.size()); }

inline void remove_mean(RealField& v)
{
  const double mu = mean(v);
  for (double& x : v) x -= mu;
}

inline ResidualField residual(const TorusGrid& grid, const RealField& phi, const TorusProblem& prob)
{
  const TwistOperator op(prob.chi, prob.theta0);
  const MatrixField w = hessian_form(grid, phi, prob.omega0);
  ResidualField out;
  out.values.resize(grid.size());
  out.margin_P = std::numeric_limits<double>::infinity();
  out.margin_Q = std::numeric_limits<double>::infinity();
  for (std::size_t p = 0; p < grid.size(); ++p) {
    const HermMatrix om = w.at(p);
    out.values[p] = op.value(om) - prob.f[p];
    const PointAngles a = op.angles(om);
    const double mp = prob.theta0 + prob.cone_margin - a.P;
    const double mq = prob.Theta0 - a.Q;
    out.margin_P = std::min(out.margin_P, mp);
    out.margin_Q = std::min(out.margin_Q, mq);
    if (!(mp > 0.0 && mq > 0.0)) ++out.cone_violations;
  }
  return out;
}

/// Grid integral of (f - G(omega)) chi^m; zero in exact arithmetic at any phi once f is
/// compatible, because the spectral Hessian minors integrate to zero.
inline double compatibility_gap(const TorusGrid& grid, const RealField& phi, const TorusProblem& prob)
{
  const TwistOperator op(prob.chi, prob.theta0);
  const MatrixField w = hessian_form(grid, phi, prob.omega0);
  RealField diff(grid.size());
  for (std::size_t p = 0; p < grid.size(); ++p) diff[p] = prob.f[p] - op.value(w.at(p));
  return stable_sum(diff) * op.det_chi() * grid.cell_volume();
}

/// Applies the sign constraints on the twist: f >= 0 for m <= 3, f > -c beyond.
inline void check_twist_sign(const RealField& f, int m, double floor_c, double tol = 0.0)
{
  for (std::size_t p = 0; p < f.size(); ++p) {
    if (m <= 3 && f[p] < -tol)
      fail(ErrorKind::TwistSignViolated, "twist is negative at grid point " + std::to_string(p));
    if (m >= 4 && !(f[p] > -floor_c))
      fail(ErrorKind::TwistSignViolated, "twist is below -c at grid point " + std::to_string(p));
  }
}

/// The linearized operator psi -> tr(D(x) i ddbar psi(x)) with its constant-coefficient
/// Fourier preconditioner built from the mean of D.
class LinearizedOperator {
 public:
  LinearizedOperator(const TorusGrid& grid, const MatrixField& omega, const TwistOperator& op) : grid_(grid)
  {
    const int m = grid.m();
    const std::size_t n = grid.size();
    coeff_ = MatrixField{m, std::vector<cplx>(n * m * m)};
    HermMatrix avg = HermMatrix::Zero(m, m);
    for (std::size_t p = 0; p < n; ++p) {
      const HermMatrix d = op.linearization(omega.at(p));
      for (int j = 0; j < m; ++j)
        for (int l = 0; l < m; ++l) coeff_(p, j, l) = d(j, l);
      avg += d;
    }
    avg /= static_cast<double>(n);
    symbol_.resize(n);
    for (std::size_t p = 0; p < n; ++p) {
      cplx s = 0.0;
      for (int j = 0; j < m; ++j)
        for (int l = 0; l < m; ++l) s += avg(l, j) * grid.hessian_symbol(j, l, p);
      symbol_[p] = s.real();
    }
    const double scale = std::abs(*std::max_element(symbol_.begin(), symbol_.end(),
                                                     [](double a, double b) { return std::abs(a) < std::abs(b); }));
    for (double& s : symbol_)
      if (std::abs(s) <= 1e-13 * scale) s = 0.0;
  }

  RealField apply(const RealField& psi) const
  {
    const MatrixField h = complex_hessian(grid_, psi);
    const int m = grid_.m();
    RealField out(grid_.size());
    for (std::size_t p = 0; p < grid_.size(); ++p) {
      cplx s = 0.0;
      for (int j = 0; j < m; ++j)
        for (int l = 0; l < m; ++l) s += coeff_(p, l, j) * h(p, j, l);
      out[p] = s.real();
    }
    return out;
  }

  /// Inverse of the mean-coefficient operator; kills the modes it annihilates.
  RealField precondition(const RealField& r) const
  {
    std::vector<cplx> spec = grid_.forward(r);
    for (std::size_t p = 0; p < spec.size(); ++p) spec[p] = symbol_[p] == 0.0 ? cplx(0.0) : spec[p] / symbol_[p];
    const std::vector<cplx> back = grid_.backward(spec);
    RealField out(back.size());
    for (std::size_t p = 0; p < back.size(); ++p) out[p] = back[p].real();
    return out;
  }

 private:
  const TorusGrid& grid_;
  MatrixField coeff_;
  std::vector<double> symbol_;
};

struct GmresResult {
  RealField x;
  int iterations = 0;
  double relative_residual = 0.0;
};

/// Right-preconditioned restarted GMRES for L x = b on the mean-zero subspace.
inline GmresResult gmres(const LinearizedOperator& op, RealField b, double rel_tol, int restart = 40, int max_iter = 600)
{
  remove_mean(b);
  const std::size_t n = b.size();
  auto dot = [](const RealField& a, const RealField& c) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * c[i];
    return s;
  };
  GmresResult res;
  res.x.assign(n, 0.0);
  const double bnorm = l2_norm(b);
  if (bnorm == 0.0) return res;
  RealField r = b;
  double rnorm = bnorm;
  while (res.iterations < max_iter && rnorm > rel_tol * bnorm) {
    std::vector<RealField> v{r};
    for (double& x : v[0]) x /= rnorm;
    std::vector<RealField> z;
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(restart + 1, restart);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(restart + 1);
    g(0) = rnorm;
    std::vector<double> cs(restart), sn(restart);
    int k = 0;
    for (; k < restart && res.iterations < max_iter; ++k, ++res.iterations) {
      z.push_back(op.precondition(v[k]));
      RealField w = op.apply(z[k]);
      remove_mean(w);
      for (int i = 0; i <= k; ++i) {
        h(i, k) = dot(w, v[i]);
        for (std::size_t t = 0; t < n; ++t) w[t] -= h(i, k) * v[i][t];
      }
      h(k + 1, k) = l2_norm(w);
      for (int i = 0; i < k; ++i) {
        const double tmp = cs[i] * h(i, k) + sn[i] * h(i + 1, k);
        h(i + 1, k) = -sn[i] * h(i, k) + cs[i] * h(i + 1, k);
        h(i, k) = tmp;
      }
      const double denom = std::hypot(h(k, k), h(k + 1, k));
      cs[k] = denom == 0.0 ? 1.0 : h(k, k) / denom;
      sn[k] = denom == 0.0 ? 0.0 : h(k + 1, k) / denom;
      const double hk1 = h(k + 1, k);
      h(k, k) = cs[k] * h(k, k) + sn[k] * hk1;
      h(k + 1, k) = 0.0;
      g(k + 1) = -sn[k] * g(k);
      g(k) = cs[k] * g(k);
      const double wnorm = l2_norm(w);
      if (wnorm > 0.0) {
        for (double& x : w) x /= wnorm;
      }
      v.push_back(std::move(w));
      if (std::abs(g(k + 1)) <= rel_tol * bnorm || wnorm == 0.0) {
        ++k;
        ++res.iterations;
        break;
      }
    }
    const Eigen::VectorXd y = h.topLeftCorner(k, k).triangularView<Eigen::Upper>().solve(g.head(k));
    for (int i = 0; i < k; ++i)
      for (std::size_t t = 0; t < n; ++t) res.x[t] += y(i) * z[i][t];
    RealField ax = op.apply(res.x);
    remove_mean(ax);
    for (std::size_t t = 0; t < n; ++t) r[t] = b[t] - ax[t];
    const double new_norm = l2_norm(r);
    if (!(new_norm < rnorm)) {
      rnorm = new_norm;
      break;
    }
    rnorm = new_norm;
  }
  res.relative_residual = rnorm / bnorm;
  remove_mean(res.x);
  return res;
}

struct NewtonOptions {
  double tol = 1e-10;
  int max_iter = 25;
  int max_halvings = 30;
  double damping = 1.0;     // initial step length
  double gmres_floor = 1e-13;
};

struct IterateRecord {
  int iteration = 0;
  double residual_sup = 0.0;
  double residual_l2 = 0.0;
  double step = 0.0;
  int halvings = 0;
  double margin_P = 0.0;
  double margin_Q = 0.0;
  double compatibility_gap = 0.0;
  int gmres_iterations = 0;
  double unresolved_sup = 0.0;
  std::optional<double> error_sup;  // against the reference potential when known
};

struct NewtonReport {
  bool converged = false;
  std::vector<IterateRecord> iterates;
  double final_residual_sup = 0.0;
  double unresolved_sup = 0.0;
  std::optional<double> error_sup;
  double max_abs_gap = 0.0;
};

inline double sup_difference(const RealField& a, const RealField& b)
{
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s = std::max(s, std::abs(a[i] - b[i]));
  return s;
}

/// Damped Newton on mean-zero potentials. A trial step is accepted only if every grid point
/// stays in the cone (P < theta0 + margin, Q < Theta0) and the sup residual decreases;
/// otherwise the step is halved.
inline std::pair<RealField, NewtonReport> newton_solve(const TorusGrid& grid, const TorusProblem& prob, RealField phi,
                                                       const NewtonOptions& opt = {})
{
  if (prob.f.size() != grid.size()) fail(ErrorKind::ConfigError, "twist size does not match the grid");
  if (phi.size() != grid.size()) fail(ErrorKind::ConfigError, "initial potential size does not match the grid");
  remove_mean(phi);
  const TwistOperator op(prob.chi, prob.theta0);
  NewtonReport report;

  // Even grids have nonzero modes that i ddbar cannot reach; Newton solves the equation with
  // those modes projected out and reports their size separately.
  auto project = [&](ResidualField& r) {
    auto [reach, rest] = grid.split_reachable(r.values);
    r.values = std::move(reach);
    r.unresolved_sup = sup_norm(rest);
  };
  ResidualField res = residual(grid, phi, prob);
  project(res);
  if (res.cone_violations > 0)
    fail(ErrorKind::HypothesisViolated, "initial potential leaves the cone at " + std::to_string(res.cone_violations) + " points");

  auto record = [&](int it, double step, int halvings, int gmres_its) {
    IterateRecord r;
    r.iteration = it;
    r.residual_sup = sup_norm(res.values);
    r.residual_l2 = l2_norm(res.values);
    r.step = step;
    r.halvings = halvings;
    r.margin_P = res.margin_P;
    r.margin_Q = res.margin_Q;
    r.compatibility_gap = compatibility_gap(grid, phi, prob);
    r.gmres_iterations = gmres_its;
    r.unresolved_sup = res.unresolved_sup;
    if (prob.reference_phi) r.error_sup = sup_difference(phi, *prob.reference_phi);
    report.max_abs_gap = std::max(report.max_abs_gap, std::abs(r.compatibility_gap));
    report.iterates.push_back(r);
  };
  record(0, 0.0, 0, 0);

  for (int it = 1; it <= opt.max_iter + 1; ++it) {
    const double rsup = sup_norm(res.values);
    if (rsup <= opt.tol) {
      report.converged = true;
      break;
    }
    if (it > opt.max_iter) break;
    const MatrixField w = hessian_form(grid, phi, prob.omega0);
    const LinearizedOperator lin(grid, w, op);
    RealField rhs(res.values.size());
    for (std::size_t p = 0; p < rhs.size(); ++p) rhs[p] = -res.values[p];
    const double forcing = std::max(opt.gmres_floor, std::min(1e-4, rsup));
    const GmresResult dir = gmres(lin, rhs, forcing);

    double step = opt.damping;
    int halvings = 0;
    bool accepted = false;
    for (; halvings <= opt.max_halvings; ++halvings, step *= 0.5) {
      RealField trial = phi;
      for (std::size_t p = 0; p < trial.size(); ++p) trial[p] += step * dir.x[p];
      ResidualField tr = residual(grid, trial, prob);
      project(tr);
      if (tr.cone_violations == 0 && sup_norm(tr.values) < rsup) {
        phi = std::move(trial);
        res = std::move(tr);
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      report.final_residual_sup = rsup;
      fail(ErrorKind::ConeEscape, "no admissible step after " + std::to_string(opt.max_halvings) +
                                      " halvings at iteration " + std::to_string(it));
    }
    record(it, step, halvings, dir.iterations);
  }
  report.final_residual_sup = sup_norm(res.values);
  report.unresolved_sup = res.unresolved_sup;
  if (prob.reference_phi) report.error_sup = sup_difference(phi, *prob.reference_phi);
  if (!report.converged)
    fail(ErrorKind::MaxIterations, "residual " + std::to_string(report.final_residual_sup) + " after " +
                                       std::to_string(opt.max_iter) + " iterations");
  return {phi, report};
}

/// G(omega0) as a constant twist: the potential phi = 0 solves it.
inline RealField easy_twist(const TorusGrid& grid, const TorusProblem& prob)
{
  const TwistOperator op(prob.chi, prob.theta0);
  return RealField(grid.size(), op.value(prob.omega0));
}

struct PathStep {
  double s = 0.0;
  int iterations = 0;
  double residual_sup = 0.0;
  double margin_P = 0.0;
  double margin_Q = 0.0;
};

struct PathReport {
  std::vector<PathStep> steps;
  NewtonReport final_solve;
};

/// Newton along f_s = (1 - s) f_easy + s f_target, s = 1/steps, ..., 1, warm-started. Every
/// f_s is checked against the twist sign constraint before any solve.
inline std::pair<RealField, PathReport> continuity_path(const TorusGrid& grid, const TorusProblem& target, int steps,
                                                        const NewtonOptions& opt = {})
{
  if (steps < 1) fail(ErrorKind::ConfigError, "continuity path needs at least one step");
  const RealField easy = easy_twist(grid, target);
  std::vector<TorusProblem> stages;
  for (int i = 1; i <= steps; ++i) {
    const double s = static_cast<double>(i) / steps;
    TorusProblem p = target;
    for (std::size_t q = 0; q < p.f.size(); ++q) p.f[q] = (1.0 - s) * easy[q] + s * target.f[q];
    if (i < steps) p.reference_phi.reset();
    try {
      check_twist_sign(p.f, p.m, p.twist_floor);
    } catch (const Error& e) {
      fail(ErrorKind::TwistSignViolated, "path stage s=" + std::to_string(s) + ": " + e.what());
    }
    stages.push_back(std::move(p));
  }
  PathReport report;
  RealField phi(grid.size(), 0.0);
  for (int i = 0; i < steps; ++i) {
    const double s = static_cast<double>(i + 1) / steps;
    try {
      auto [next, rep] = newton_solve(grid, stages[i], phi, opt);
      phi = std::move(next);
      const auto& last = rep.iterates.back();
      report.steps.push_back({s, static_cast<int>(rep.iterates.size()) - 1, last.residual_sup, last.margin_P, last.margin_Q});
      if (i + 1 == steps) report.final_solve = rep;
    } catch (const Error& e) {
      fail(ErrorKind::PathBreak, "s=" + std::to_string(s) + ": " + e.what());
    }
  }
  return {phi, report};
}

/// Builds the twist field for a problem from the catalog.
inline void materialize_twist(const TorusGrid& grid, TorusProblem& prob, const TwistSpec& spec,
                              const std::function<RealField(const std::string&)>& load_grid = {})
{
  const TwistOperator op(prob.chi, prob.theta0);
  switch (spec.kind) {
    case TwistSpec::Kind::Constant:
      prob.f.assign(grid.size(), spec.constant);
      break;
    case TwistSpec::Kind::Cosine: {
      const double base = op.value(prob.omega0);
      prob.f = grid.sample([&](const std::vector<double>& x) { return base + eval_modes(spec.modes, x); });
      break;
    }
    case TwistSpec::Kind::Manufactured: {
      RealField ref = grid.sample([&](const std::vector<double>& x) { return eval_modes(spec.modes, x); });
      remove_mean(ref);
      const MatrixField w = hessian_form(grid, ref, prob.omega0);
      prob.f.resize(grid.size());
      for (std::size_t p = 0; p < grid.size(); ++p) prob.f[p] = op.value(w.at(p));
      prob.reference_phi = std::move(ref);
      break;
    }
    case TwistSpec::Kind::Grid:
      if (!load_grid) fail(ErrorKind::ConfigError, "grid twist needs a loader");
      prob.f = load_grid(spec.grid_path);
      if (prob.f.size() != grid.size()) fail(ErrorKind::ConfigError, "twist dump has the wrong number of values");
      break;
  }
}

inline nlohmann::json to_json(const IterateRecord& r)
{
  nlohmann::json j = {{"iteration", r.iteration},     {"residual_sup", r.residual_sup}, {"residual_l2", r.residual_l2},
                      {"step", r.step},               {"halvings", r.halvings},         {"margin_P", r.margin_P},
                      {"margin_Q", r.margin_Q},       {"compatibility_gap", r.compatibility_gap},
                      {"gmres_iterations", r.gmres_iterations}, {"unresolved_sup", r.unresolved_sup}};
  j["error_sup"] = r.error_sup ? nlohmann::json(*r.error_sup) : nlohmann::json(nullptr);
  return j;
}

inline nlohmann::json to_json(const NewtonReport& r)
{
  nlohmann::json its = nlohmann::json::array();
  for (const auto& it : r.iterates) its.push_back(to_json(it));
  nlohmann::json j = {{"converged", r.converged},
                      {"iterations", static_cast<int>(r.iterates.size()) - 1},
                      {"final_residual_sup", r.final_residual_sup},
                      {"unresolved_sup", r.unresolved_sup},
                      {"max_abs_compatibility_gap", r.max_abs_gap},
                      {"iterates", its}};
  j["error_sup"] = r.error_sup ? nlohmann::json(*r.error_sup) : nlohmann::json(nullptr);
  return j;
}

}  // namespace dhym

#endif  // DHYM_TORUS_SOLVER_HPP
