#ifndef DHYM_FORM_ALGEBRA_HPP
#define DHYM_FORM_ALGEBRA_HPP

// Constant-coefficient (p,q)-forms on C^n, n <= 6.
//
// Basis: dz^I ^ dzbar^J with I, J strictly increasing, stored as bitmasks, holomorphic
// factors first. A Hermitian matrix H gives the real (1,1)-form  i sum H_jk dz^j ^ dzbar^k,
// which is positive exactly when H > 0. Top-degree forms are compared through their ratio
// to chi^n, so the orientation convention cancels.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "json.hpp"

#include "dhym/error.hpp"
#include "dhym/hermitian_core.hpp"
#include "dhym/linalg.hpp"
#include "dhym/random.hpp"

namespace dhym {

inline constexpr int kMaxFormDim = 6;

namespace detail {

/// Sign of merging two disjoint increasing index sets a then b into increasing order:
/// the parity of pairs (x in a, y in b) with x > y.
inline int merge_sign(unsigned a, unsigned b)
{
  int inversions = 0;
  for (unsigned rest = b; rest != 0; rest &= rest - 1) {
    const unsigned low = rest & (~rest + 1u);
    inversions += std::popcount(a & ~((low << 1) - 1u));
  }
  return (inversions & 1) ? -1 : 1;
}

inline std::vector<int> mask_indices(unsigned mask)
{
  std::vector<int> out;
  for (int j = 0; mask != 0; ++j, mask >>= 1)
    if (mask & 1u) out.push_back(j);
  return out;
}

inline unsigned indices_mask(const std::vector<int>& idx, int n)
{
  unsigned mask = 0;
  for (int j : idx) {
    if (j < 0 || j >= n) fail(ErrorKind::ParseError, "form index out of range");
    if (mask & (1u << j)) fail(ErrorKind::ParseError, "repeated form index");
    mask |= 1u << j;
  }
  return mask;
}

}  // namespace detail

class PPForm {
 public:
  PPForm() = default;

  PPForm(int n, int p, int q) : n_(n), p_(p), q_(q)
  {
    if (n < 1 || n > kMaxFormDim) fail(ErrorKind::DegreeOverflow, "form dimension outside 1..6");
    if (p < 0 || q < 0 || p > n || q > n) fail(ErrorKind::DegreeOverflow, "bidegree does not fit the dimension");
    coeffs_.assign(std::size_t(1) << (2 * n), cplx(0.0, 0.0));
  }

  static PPForm constant(int n, cplx value)
  {
    PPForm f(n, 0, 0);
    f.coeffs_[0] = value;
    return f;
  }

  static PPForm dz(int n, int j)
  {
    PPForm f(n, 1, 0);
    f.at(1u << j, 0) = 1.0;
    return f;
  }

  static PPForm dzbar(int n, int j)
  {
    PPForm f(n, 0, 1);
    f.at(0, 1u << j) = 1.0;
    return f;
  }

  /// i sum_{j,k} H_jk dz^j ^ dzbar^k.
  static PPForm from_hermitian(const HermMatrix& h)
  {
    const int n = static_cast<int>(h.rows());
    PPForm f(n, 1, 1);
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) f.at(1u << j, 1u << k) = cplx(0.0, 1.0) * h(j, k);
    return f;
  }

  /// Inverse of from_hermitian for a (1,1)-form (no reality check).
  HermMatrix to_matrix() const
  {
    require_bidegree(1, 1);
    HermMatrix h(n_, n_);
    for (int j = 0; j < n_; ++j)
      for (int k = 0; k < n_; ++k) h(j, k) = coeff(1u << j, 1u << k) / cplx(0.0, 1.0);
    return h;
  }

  int dim() const { return n_; }
  int p() const { return p_; }
  int q() const { return q_; }
  int degree() const { return p_ + q_; }

  cplx coeff(unsigned I, unsigned J) const { return coeffs_[index(I, J)]; }
  cplx& at(unsigned I, unsigned J)
  {
    if (std::popcount(I) != p_ || std::popcount(J) != q_)
      fail(ErrorKind::DegreeOverflow, "multi-index does not match the bidegree");
    return coeffs_[index(I, J)];
  }

  /// Calls fn(I, J, c) for every stored coefficient with |c| > tol.
  template <class Fn>
  void for_each_term(Fn&& fn, double tol = 0.0) const
  {
    const unsigned full = 1u << n_;
    for (unsigned I = 0; I < full; ++I) {
      if (std::popcount(I) != p_) continue;
      for (unsigned J = 0; J < full; ++J) {
        if (std::popcount(J) != q_) continue;
        const cplx c = coeffs_[index(I, J)];
        if (std::abs(c) > tol) fn(I, J, c);
      }
    }
  }

  std::size_t nonzero_count(double tol = 0.0) const
  {
    std::size_t count = 0;
    for_each_term([&](unsigned, unsigned, cplx) { ++count; }, tol);
    return count;
  }

  double max_abs() const
  {
    double m = 0.0;
    for (const cplx& c : coeffs_) m = std::max(m, std::abs(c));
    return m;
  }

  /// Coefficient of dz^{1..n} ^ dzbar^{1..n}.
  cplx top_coefficient() const
  {
    require_bidegree(n_, n_);
    const unsigned full = (1u << n_) - 1u;
    return coeff(full, full);
  }

  PPForm& operator+=(const PPForm& other)
  {
    require_same_shape(other);
    for (std::size_t i = 0; i < coeffs_.size(); ++i) coeffs_[i] += other.coeffs_[i];
    return *this;
  }
  PPForm& operator-=(const PPForm& other)
  {
    require_same_shape(other);
    for (std::size_t i = 0; i < coeffs_.size(); ++i) coeffs_[i] -= other.coeffs_[i];
    return *this;
  }
  PPForm& operator*=(cplx s)
  {
    for (cplx& c : coeffs_) c *= s;
    return *this;
  }

  friend PPForm operator+(PPForm a, const PPForm& b) { return a += b; }
  friend PPForm operator-(PPForm a, const PPForm& b) { return a -= b; }
  friend PPForm operator*(PPForm a, cplx s) { return a *= s; }
  friend PPForm operator*(cplx s, PPForm a) { return a *= s; }
  friend PPForm operator*(PPForm a, double s) { return a *= cplx(s, 0.0); }
  friend PPForm operator*(double s, PPForm a) { return a *= cplx(s, 0.0); }

  /// Complex conjugate form: conj(c dz^I ^ dzbar^J) = (-1)^{pq} conj(c) dz^J ^ dzbar^I.
  PPForm conj() const
  {
    PPForm out(n_, q_, p_);
    const double sign = ((p_ * q_) & 1) ? -1.0 : 1.0;
    for_each_term([&](unsigned I, unsigned J, cplx c) { out.at(J, I) = sign * std::conj(c); });
    return out;
  }

  /// (F + conj F)/2 and (F - conj F)/(2i) for (p,p)-forms.
  PPForm re() const
  {
    require_square();
    return (*this + conj()) * 0.5;
  }
  PPForm im() const
  {
    require_square();
    return (*this - conj()) * cplx(0.0, -0.5);
  }

  /// Largest |F - conj F| coefficient relative to the largest coefficient.
  double reality_defect() const
  {
    require_square();
    const double scale = max_abs();
    return scale == 0.0 ? 0.0 : (*this - conj()).max_abs() / scale;
  }

 private:
  std::size_t index(unsigned I, unsigned J) const { return (std::size_t(I) << n_) | J; }

  void require_same_shape(const PPForm& other) const
  {
    if (other.n_ != n_ || other.p_ != p_ || other.q_ != q_)
      fail(ErrorKind::DegreeOverflow, "forms of different shape");
  }
  void require_square() const
  {
    if (p_ != q_) fail(ErrorKind::DegreeOverflow, "real and imaginary parts need a (p,p)-form");
  }
  void require_bidegree(int p, int q) const
  {
    if (p_ != p || q_ != q) fail(ErrorKind::DegreeOverflow, "unexpected bidegree");
  }

  int n_ = 0;
  int p_ = 0;
  int q_ = 0;
  std::vector<cplx> coeffs_;
};

/// Exterior product. dz^{I1} dzbar^{J1} ^ dz^{I2} dzbar^{J2} picks up (-1)^{|J1||I2|} from
/// moving dz^{I2} left, then the merge signs of I1 I2 and J1 J2.
inline PPForm wedge(const PPForm& f, const PPForm& g)
{
  if (f.dim() != g.dim()) fail(ErrorKind::DegreeOverflow, "wedge of forms on different spaces");
  const int n = f.dim();
  if (f.p() + g.p() > n || f.q() + g.q() > n) fail(ErrorKind::DegreeOverflow, "wedge exceeds bidegree (n,n)");
  PPForm out(n, f.p() + g.p(), f.q() + g.q());
  const double cross = ((f.q() * g.p()) & 1) ? -1.0 : 1.0;
  std::vector<std::pair<std::pair<unsigned, unsigned>, cplx>> rhs;
  g.for_each_term([&](unsigned I, unsigned J, cplx c) { rhs.push_back({{I, J}, c}); });
  f.for_each_term([&](unsigned I1, unsigned J1, cplx a) {
    for (const auto& [idx, b] : rhs) {
      const auto [I2, J2] = idx;
      if ((I1 & I2) || (J1 & J2)) continue;
      const int s = detail::merge_sign(I1, I2) * detail::merge_sign(J1, J2);
      out.at(I1 | I2, J1 | J2) += (cross * s) * a * b;
    }
  });
  return out;
}

/// F^k with F^0 = 1.
inline PPForm wedge_power(const PPForm& f, int k)
{
  PPForm out = PPForm::constant(f.dim(), 1.0);
  for (int i = 0; i < k; ++i) out = wedge(out, f);
  return out;
}

struct ComplexForm {
  PPForm re;
  PPForm im;
};

/// (omega + i chi)^k by binomial expansion, split into real and imaginary parts with exact
/// powers of i. omega and chi are real (1,1)-forms.
inline ComplexForm complex_power(const PPForm& omega, const PPForm& chi, int k)
{
  const int n = omega.dim();
  if (k < 0 || k > n) fail(ErrorKind::DegreeOverflow, "power exceeds the dimension");
  PPForm re(n, k, k);
  PPForm im(n, k, k);
  std::vector<PPForm> omega_pow{PPForm::constant(n, 1.0)};
  std::vector<PPForm> chi_pow{PPForm::constant(n, 1.0)};
  for (int i = 1; i <= k; ++i) {
    omega_pow.push_back(wedge(omega_pow.back(), omega));
    chi_pow.push_back(wedge(chi_pow.back(), chi));
  }
  double binom = 1.0;
  for (int j = 0; j <= k; ++j) {
    // i^j cycles 1, i, -1, -i
    const PPForm term = wedge(omega_pow[k - j], chi_pow[j]) * binom;
    switch (j % 4) {
      case 0: re += term; break;
      case 1: im += term; break;
      case 2: re -= term; break;
      case 3: im -= term; break;
    }
    binom = binom * (k - j) / (j + 1);
  }
  return {re, im};
}

/// Real and imaginary parts of e^{-i phase} (re + i im).
inline ComplexForm rotate(const ComplexForm& f, double phase)
{
  const double c = std::cos(phase);
  const double s = std::sin(phase);
  return {f.re * c + f.im * s, f.im * c - f.re * s};
}

/// Ratio F / chi^n of a top form to the volume form of a positive (1,1)-form chi.
inline cplx pair_top_complex(const PPForm& f, const PPForm& chi)
{
  if (chi.p() != 1 || chi.q() != 1) fail(ErrorKind::DegreeOverflow, "chi must be a (1,1)-form");
  if (!(min_eigenvalue(chi.to_matrix()) > 0.0)) fail(ErrorKind::MetricNotPositive, "chi is not positive");
  const cplx vol = wedge_power(chi, chi.dim()).top_coefficient();
  return f.top_coefficient() / vol;
}

inline double pair_top(const PPForm& f, const PPForm& chi) { return pair_top_complex(f, chi).real(); }

/// (i a_1 ^ conj a_1) ^ ... ^ (i a_q ^ conj a_q) for covectors a_j (columns of `generators`).
class SimplePositiveForm {
 public:
  explicit SimplePositiveForm(Eigen::MatrixXcd generators) : gens_(std::move(generators)) {}

  int dim() const { return static_cast<int>(gens_.rows()); }
  int degree() const { return static_cast<int>(gens_.cols()); }
  const Eigen::MatrixXcd& generators() const { return gens_; }

  double gram_determinant() const
  {
    if (degree() == 0) return 1.0;
    return (gens_.adjoint() * gens_).determinant().real();
  }

  bool degenerate(double cutoff = 1e-8) const { return gram_determinant() < cutoff; }

  PPForm to_form() const
  {
    PPForm out = PPForm::constant(dim(), 1.0);
    for (int j = 0; j < degree(); ++j) {
      const Eigen::VectorXcd a = gens_.col(j);
      out = wedge(out, PPForm::from_hermitian(a * a.adjoint()));
    }
    return out;
  }

  /// Complex Gaussian generators, redrawn while the Gram determinant is below `cutoff`.
  static SimplePositiveForm random(int n, int q, Rng& rng, double cutoff = 1e-8)
  {
    for (;;) {
      SimplePositiveForm f(complex_gaussian_matrix(n, q, rng));
      if (!f.degenerate(cutoff)) return f;
    }
  }

 private:
  Eigen::MatrixXcd gens_;
};

struct PositivityReport {
  double worst_pairing = -std::numeric_limits<double>::infinity();
  int trials = 0;
  int degenerate_skipped = 0;
};

/// Largest value of  pair_top(Im(e^{-i theta0}(omega + i chi)^p) ^ Omega, chi)  over random
/// nondegenerate simple positive (n-p, n-p)-forms Omega normalized to unit generators.
/// Negative whenever the angle P of omega relative to chi is below theta0.
inline PositivityReport positivity_check(const HermMatrix& omega, const HermMatrix& chi, double theta0, int p,
                                         int trials, std::uint64_t seed,
                                         const std::vector<SimplePositiveForm>& extra = {})
{
  const int n = static_cast<int>(omega.rows());
  if (p < 1 || p > n - 1) fail(ErrorKind::BadOrder, "p must lie in 1..n-1");
  if (!(angle_of(AngleKind::P, chi, omega) < theta0))
    fail(ErrorKind::HypothesisViolated, "angle P of omega is not below theta0");
  const PPForm om = PPForm::from_hermitian(omega);
  const PPForm ch = PPForm::from_hermitian(chi);
  const PPForm target = rotate(complex_power(om, ch, p), theta0).im;
  const cplx vol = wedge_power(ch, n).top_coefficient();
  PositivityReport report;
  auto visit = [&](const SimplePositiveForm& omega_test) {
    if (omega_test.degenerate()) {
      ++report.degenerate_skipped;
      return;
    }
    const double value = (wedge(target, omega_test.to_form()).top_coefficient() / vol).real();
    report.worst_pairing = std::max(report.worst_pairing, value);
    ++report.trials;
  };
  Rng rng(seed);
  for (int t = 0; t < trials; ++t) {
    Eigen::MatrixXcd g = complex_gaussian_matrix(n, n - p, rng);
    g.colwise().normalize();
    visit(SimplePositiveForm(g));
  }
  for (const auto& f : extra) visit(f);
  return report;
}

struct SqueezedReport {
  double worst_gap = -std::numeric_limits<double>::infinity();  // max of lhs - rhs
  bool holds = true;
};

/// Checks Re(e^{-i theta'} (omega + i chi2)^k) <= -(2/sigma) Im(e^{-i theta'} (omega + i chi2)^k),
/// theta' = theta + sigma, by pairing against random simple positive forms and the coordinate
/// ones of the frame diagonalizing omega relative to chi2.
inline SqueezedReport squeezed_angle_check(const HermMatrix& omega, const HermMatrix& chi2, double theta,
                                           double sigma, int k, int trials = 16, std::uint64_t seed = 1,
                                           double tol = 1e-9)
{
  const int n = static_cast<int>(omega.rows());
  if (k < 1 || k > n) fail(ErrorKind::BadOrder, "k must lie in 1..n");
  if (!(sigma > 0.0)) fail(ErrorKind::HypothesisViolated, "sigma must be positive");
  const double theta_s = theta + sigma;
  if (!(theta_s < kPi) || !(std::sin(theta_s) >= sigma / 2))
    fail(ErrorKind::HypothesisViolated, "squeezed angle needs theta + sigma < pi with sin(theta + sigma) >= sigma/2");
  if (!(angle_of(AngleKind::Q, chi2, omega) < theta))
    fail(ErrorKind::HypothesisViolated, "angle Q of omega relative to chi2 is not below theta");
  const PPForm om = PPForm::from_hermitian(omega);
  const PPForm ch = PPForm::from_hermitian(chi2);
  const ComplexForm rot = rotate(complex_power(om, ch, k), theta_s);
  const PPForm diff = rot.re + rot.im * (2.0 / sigma);  // must be <= 0
  const cplx vol = wedge_power(ch, n).top_coefficient();
  SqueezedReport report;
  auto visit = [&](const Eigen::MatrixXcd& gens) {
    const PPForm test = SimplePositiveForm(gens).to_form();
    const double scale = std::max(1.0, (wedge(rot.im, test).top_coefficient() / vol).real() * (-2.0 / sigma));
    const double value = (wedge(diff, test).top_coefficient() / vol).real();
    report.worst_gap = std::max(report.worst_gap, value);
    if (value > tol * scale) report.holds = false;
  };
  if (k == n) {
    visit(Eigen::MatrixXcd(n, 0));
  } else {
    // Coordinate forms in the frame where chi2 = I and omega is diagonal.
    const MetricReduction red(chi2);
    Eigen::SelfAdjointEigenSolver<HermMatrix> es(red.reduce(omega));
    const Eigen::MatrixXcd frame = red.inverse_sqrt() * es.eigenvectors();
    // Covectors dual to the frame: rows of frame^{-1}, taken as columns.
    const Eigen::MatrixXcd dual = frame.inverse().transpose();
    for (unsigned mask = 0; mask < (1u << n); ++mask) {
      if (std::popcount(mask) != n - k) continue;
      Eigen::MatrixXcd gens(n, n - k);
      int col = 0;
      for (int j : detail::mask_indices(mask)) gens.col(col++) = dual.col(j);
      visit(gens);
    }
    Rng rng(seed);
    for (int t = 0; t < trials; ++t) {
      Eigen::MatrixXcd g = complex_gaussian_matrix(n, n - k, rng);
      g.colwise().normalize();
      visit(g);
    }
  }
  return report;
}

struct TermsReport {
  double lhs = 0.0;       // G + S paired against chi3^n
  double base = 0.0;      // Im(e^{-i theta'} (omega + i chi2)^{n-k}) ^ chi3^k paired against chi3^n
  double required_c = 0.0;  // smallest C with lhs <= sigma^k (1 - C sigma^2) base
};

/// The k-th block of the binomial expansion of Im(e^{-i theta'} (omega + sigma chi3 + i chi1)^n)
/// with chi1 = chi2 + chid:
///   G = Im(e^{-i theta'} (omega + i chi2)^{n-k}) ^ (sigma chi3)^k,
///   S = sum_{l<k} binom(k,l) Im(e^{-i theta'} (omega + i chi2)^{n-k} ^ (sigma chi3)^l ^ (i chid)^{k-l}).
inline TermsReport terms_block(const HermMatrix& omega, const HermMatrix& chi2, const HermMatrix& chi3,
                               const HermMatrix& chid, double theta, double sigma, int k)
{
  const int n = static_cast<int>(omega.rows());
  if (k < 1 || k > n) fail(ErrorKind::BadOrder, "k must lie in 1..n");
  const double theta_s = theta + sigma;
  const PPForm om = PPForm::from_hermitian(omega);
  const PPForm c2 = PPForm::from_hermitian(chi2);
  const PPForm c3 = PPForm::from_hermitian(chi3);
  const PPForm cd = PPForm::from_hermitian(chid);
  const ComplexForm head = rotate(complex_power(om, c2, n - k), theta_s);
  const cplx vol = wedge_power(c3, n).top_coefficient();
  auto top = [&](const PPForm& f) { return (f.top_coefficient() / vol).real(); };

  const double g = top(wedge(head.im, wedge_power(c3 * sigma, k)));
  double s = 0.0;
  double binom = 1.0;
  for (int l = 0; l < k; ++l) {
    // (i chid)^{k-l} = i^{k-l} chid^{k-l}; Im(z i^j) picks Re or Im of z with a sign.
    const int j = k - l;
    const PPForm tail = wedge(wedge_power(c3 * sigma, l), wedge_power(cd, j));
    double term = 0.0;
    switch (j % 4) {
      case 0: term = top(wedge(head.im, tail)); break;
      case 1: term = top(wedge(head.re, tail)); break;
      case 2: term = -top(wedge(head.im, tail)); break;
      case 3: term = -top(wedge(head.re, tail)); break;
    }
    s += binom * term;
    binom = binom * (k - l) / (l + 1);
  }
  TermsReport r;
  r.lhs = g + s;
  r.base = top(wedge(head.im, wedge_power(c3, k)));
  const double sk = std::pow(sigma, k);
  r.required_c = (r.lhs - sk * r.base) / (sk * sigma * sigma * std::abs(r.base));
  return r;
}

inline nlohmann::json to_json(const PPForm& f, double tol = 0.0)
{
  nlohmann::json terms = nlohmann::json::array();
  f.for_each_term(
      [&](unsigned I, unsigned J, cplx c) {
        terms.push_back({{"I", detail::mask_indices(I)}, {"J", detail::mask_indices(J)}, {"re", c.real()},
                         {"im", c.imag()}});
      },
      tol);
  return {{"dim", f.dim()}, {"bidegree", {f.p(), f.q()}}, {"coeffs", terms}};
}

inline PPForm form_from_json(const nlohmann::json& j)
{
  PPForm f(j.at("dim").get<int>(), j.at("bidegree").at(0).get<int>(), j.at("bidegree").at(1).get<int>());
  for (const auto& t : j.at("coeffs")) {
    const unsigned I = detail::indices_mask(t.at("I").get<std::vector<int>>(), f.dim());
    const unsigned J = detail::indices_mask(t.at("J").get<std::vector<int>>(), f.dim());
    f.at(I, J) = cplx(t.at("re").get<double>(), t.at("im").get<double>());
  }
  return f;
}

}  // namespace dhym

#endif  // DHYM_FORM_ALGEBRA_HPP
