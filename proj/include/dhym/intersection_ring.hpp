#ifndef DHYM_INTERSECTION_RING_HPP
#define DHYM_INTERSECTION_RING_HPP

// Toy cohomology rings: a basis of (1,1)-classes, a symmetric top intersection tensor and a
// list of cycles, each carrying the symmetric tensor that evaluates dim(Y)-fold products of
// basis classes on Y. Arithmetic is exact by default (Scalar = cpp_rational).

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "dhym/error.hpp"
#include "dhym/linalg.hpp"

namespace dhym {

using Rational = boost::multiprecision::cpp_rational;

template <class Scalar>
double to_double(const Scalar& x)
{
  if constexpr (std::is_floating_point_v<Scalar>) {
    return static_cast<double>(x);
  } else {
    return x.template convert_to<double>();
  }
}

/// Exact binomial coefficient as a Scalar.
template <class Scalar>
Scalar binomial(int m, int k)
{
  Scalar b = 1;
  for (int i = 0; i < k; ++i) b = b * Scalar(m - i) / Scalar(i + 1);
  return b;
}

/// Complex number over an exact field; only the operations the ring needs.
template <class Scalar>
struct ComplexScalar {
  Scalar re = 0;
  Scalar im = 0;

  friend ComplexScalar operator+(const ComplexScalar& a, const ComplexScalar& b) { return {a.re + b.re, a.im + b.im}; }
  friend ComplexScalar operator*(const ComplexScalar& a, const Scalar& s) { return {a.re * s, a.im * s}; }
  /// Multiplication by i^j.
  ComplexScalar times_i_power(int j) const
  {
    switch (((j % 4) + 4) % 4) {
      case 0: return {re, im};
      case 1: return {-im, re};
      case 2: return {-re, -im};
      default: return {im, -re};
    }
  }
};

template <class Scalar>
struct Cycle {
  std::string label;
  int dim = 0;
  std::map<std::vector<int>, Scalar> eval;  // sorted basis index tuple of length dim -> value
};

template <class Scalar = Rational>
class ToyRing {
 public:
  ToyRing() = default;
  ToyRing(std::string name, int n, std::vector<std::string> basis) : name_(std::move(name)), n_(n), basis_(std::move(basis))
  {
    if (n_ < 1) fail(ErrorKind::ParseError, "ring dimension must be >= 1");
    if (basis_.empty()) fail(ErrorKind::ParseError, "ring needs at least one basis class");
    Cycle<Scalar> top;
    top.label = "X";
    top.dim = n_;
    cycles_.push_back(top);
  }

  const std::string& name() const { return name_; }
  int dim() const { return n_; }
  int rank() const { return static_cast<int>(basis_.size()); }
  const std::vector<std::string>& basis() const { return basis_; }
  const std::vector<Cycle<Scalar>>& cycles() const { return cycles_; }

  int basis_index(const std::string& label) const
  {
    for (int i = 0; i < rank(); ++i)
      if (basis_[i] == label) return i;
    return -1;
  }

  void add_cycle(const std::string& label, int dim)
  {
    if (label == "X") fail(ErrorKind::ParseError, "cycle label X is reserved for the fundamental class");
    if (dim < 1 || dim >= n_) fail(ErrorKind::ParseError, "cycle " + label + " must have dimension in 1..n-1");
    if (find_cycle(label)) fail(ErrorKind::ParseError, "duplicate cycle " + label);
    Cycle<Scalar> c;
    c.label = label;
    c.dim = dim;
    cycles_.push_back(c);
  }

  /// Sets the symmetric tensor entry of `cycle` at the given basis indices (any order).
  void set_entry(const std::string& cycle, std::vector<int> idx, const Scalar& value)
  {
    Cycle<Scalar>& c = cycle_ref(cycle);
    if (static_cast<int>(idx.size()) != c.dim)
      fail(ErrorKind::ParseError, "entry for " + cycle + " needs " + std::to_string(c.dim) + " indices");
    for (int i : idx)
      if (i < 0 || i >= rank()) fail(ErrorKind::ParseError, "basis index out of range in entry for " + cycle);
    std::sort(idx.begin(), idx.end());
    c.eval[idx] = value;
  }

  const Cycle<Scalar>* find_cycle(const std::string& label) const
  {
    for (const auto& c : cycles_)
      if (c.label == label) return &c;
    return nullptr;
  }

  const Cycle<Scalar>& cycle(const std::string& label) const
  {
    if (const auto* c = find_cycle(label)) return *c;
    fail(ErrorKind::UnknownCycle, "no cycle named " + label);
  }

  /// Product of the given classes evaluated on a cycle (multilinear, symmetric).
  Scalar evaluate(const Cycle<Scalar>& y, const std::vector<const std::vector<Scalar>*>& factors) const
  {
    if (static_cast<int>(factors.size()) != y.dim) fail(ErrorKind::DegreeOverflow, "wrong number of factors for " + y.label);
    Scalar total = 0;
    for (const auto& [idx, value] : y.eval) {
      // Sum over distinct assignments of the multiset idx to the ordered factors.
      std::vector<int> perm = idx;
      do {
        Scalar prod = value;
        for (std::size_t f = 0; f < factors.size() && prod != 0; ++f) prod *= (*factors[f])[perm[f]];
        total += prod;
      } while (std::next_permutation(perm.begin(), perm.end()));
    }
    return total;
  }

  /// Entries are stored under sorted keys, which makes every tensor symmetric; this confirms
  /// the storage invariant.
  bool tensors_symmetric() const
  {
    for (const auto& c : cycles_)
      for (const auto& [idx, v] : c.eval) {
        if (!std::is_sorted(idx.begin(), idx.end())) return false;
        (void)v;
      }
    return true;
  }

  Cycle<Scalar>& cycle_ref(const std::string& label)
  {
    for (auto& c : cycles_)
      if (c.label == label) return c;
    fail(ErrorKind::UnknownCycle, "no cycle named " + label);
  }

 private:
  std::string name_;
  int n_ = 0;
  std::vector<std::string> basis_;
  std::vector<Cycle<Scalar>> cycles_;
};

template <class Scalar = Rational>
struct ClassVector {
  std::vector<Scalar> coeffs;

  static ClassVector zero(const ToyRing<Scalar>& ring) { return {std::vector<Scalar>(ring.rank(), Scalar(0))}; }
  static ClassVector basis(const ToyRing<Scalar>& ring, const std::string& label)
  {
    ClassVector v = zero(ring);
    const int i = ring.basis_index(label);
    if (i < 0) fail(ErrorKind::ParseError, "unknown basis class " + label);
    v.coeffs[i] = 1;
    return v;
  }

  friend ClassVector operator+(ClassVector a, const ClassVector& b)
  {
    for (std::size_t i = 0; i < a.coeffs.size(); ++i) a.coeffs[i] += b.coeffs[i];
    return a;
  }
  friend ClassVector operator-(ClassVector a, const ClassVector& b)
  {
    for (std::size_t i = 0; i < a.coeffs.size(); ++i) a.coeffs[i] -= b.coeffs[i];
    return a;
  }
  friend ClassVector operator*(const Scalar& s, ClassVector a)
  {
    for (auto& c : a.coeffs) c *= s;
    return a;
  }
  friend bool operator==(const ClassVector& a, const ClassVector& b) { return a.coeffs == b.coeffs; }
};

/// Parses "2*H - E1 + 3/2*E2" (also "2H") into a class vector.
template <class Scalar>
ClassVector<Scalar> parse_class(const ToyRing<Scalar>& ring, const std::string& text)
{
  ClassVector<Scalar> v = ClassVector<Scalar>::zero(ring);
  std::string s;
  for (char ch : text)
    if (!std::isspace(static_cast<unsigned char>(ch))) s += ch;
  if (s.empty() || s == "0") return v;
  std::size_t pos = 0;
  while (pos < s.size()) {
    int sign = 1;
    if (s[pos] == '+' || s[pos] == '-') {
      sign = s[pos] == '-' ? -1 : 1;
      ++pos;
    }
    std::size_t end = pos;
    while (end < s.size() && s[end] != '+' && s[end] != '-') ++end;
    std::string term = s.substr(pos, end - pos);
    if (term.empty()) fail(ErrorKind::ParseError, "empty term in class '" + text + "'");
    std::string coef_text;
    std::string label;
    if (const auto star = term.find('*'); star != std::string::npos) {
      coef_text = term.substr(0, star);
      label = term.substr(star + 1);
    } else {
      std::size_t k = 0;
      while (k < term.size() && (std::isdigit(static_cast<unsigned char>(term[k])) || term[k] == '/' || term[k] == '.')) ++k;
      coef_text = term.substr(0, k);
      label = term.substr(k);
    }
    Scalar coef = 1;
    if (!coef_text.empty()) {
      try {
        if constexpr (std::is_floating_point_v<Scalar>) {
          const auto slash = coef_text.find('/');
          coef = slash == std::string::npos ? std::stod(coef_text)
                                            : std::stod(coef_text.substr(0, slash)) / std::stod(coef_text.substr(slash + 1));
        } else if (coef_text.find('.') != std::string::npos) {
          coef = Scalar(std::stod(coef_text));
        } else {
          coef = Scalar(coef_text);
        }
      } catch (const std::exception&) {
        fail(ErrorKind::ParseError, "bad coefficient '" + coef_text + "' in class '" + text + "'");
      }
    }
    const int idx = ring.basis_index(label);
    if (idx < 0) fail(ErrorKind::ParseError, "unknown basis class '" + label + "' in '" + text + "'");
    v.coeffs[idx] += sign * coef;
    pos = end;
  }
  return v;
}

template <class Scalar>
std::string format_class(const ToyRing<Scalar>& ring, const ClassVector<Scalar>& v)
{
  std::string out;
  for (int i = 0; i < ring.rank(); ++i) {
    if (v.coeffs[i] == 0) continue;
    std::ostringstream os;
    os << v.coeffs[i];
    std::string c = os.str();
    if (!out.empty()) out += c[0] == '-' ? " - " : " + ";
    else if (c[0] == '-') out += "-";
    if (c[0] == '-') c = c.substr(1);
    out += (c == "1" ? "" : c + "*") + ring.basis()[i];
  }
  return out.empty() ? "0" : out;
}

/// (a + i b)^k . c^{rest} . Y as an exact complex number, rest = dim Y - k.
template <class Scalar>
ComplexScalar<Scalar> complex_power_on(const ToyRing<Scalar>& ring, const Cycle<Scalar>& y, const ClassVector<Scalar>& a,
                                       const ClassVector<Scalar>& b, int k, const ClassVector<Scalar>& c)
{
  const int rest = y.dim - k;
  if (k < 0 || rest < 0) fail(ErrorKind::DegreeOverflow, "power exceeds the cycle dimension");
  ComplexScalar<Scalar> total;
  for (int j = 0; j <= k; ++j) {
    std::vector<const std::vector<Scalar>*> factors;
    for (int i = 0; i < k - j; ++i) factors.push_back(&a.coeffs);
    for (int i = 0; i < j; ++i) factors.push_back(&b.coeffs);
    for (int i = 0; i < rest; ++i) factors.push_back(&c.coeffs);
    const Scalar v = ring.evaluate(y, factors) * binomial<Scalar>(k, j);
    total = total + ComplexScalar<Scalar>{v, Scalar(0)}.times_i_power(j);
  }
  return total;
}

/// Phase data of the pair (alpha, beta). With z = (alpha + i beta)^n . X the supercritical
/// phase is theta0 = arg z, equivalently n pi/2 - arg((beta + i alpha)^n . X). cot theta0 is
/// kept exact when theta0 comes from classes.
template <class Scalar = Rational>
struct Phase {
  double theta0 = 0.0;
  double vartheta0 = 0.0;  // arg((beta + i alpha)^n . X) reduced to [0, 2 pi)
  Scalar cot_theta0 = 0;
  ComplexScalar<Scalar> volume;  // z
};

template <class Scalar>
Phase<Scalar> theta0_from_classes(const ToyRing<Scalar>& ring, const ClassVector<Scalar>& alpha,
                                  const ClassVector<Scalar>& beta)
{
  const auto& x = ring.cycle("X");
  const ComplexScalar<Scalar> z = complex_power_on(ring, x, alpha, beta, ring.dim(), ClassVector<Scalar>::zero(ring));
  if (z.re == 0 && z.im == 0) fail(ErrorKind::DegenerateVolume, "(alpha + i beta)^n . X vanishes");
  Phase<Scalar> ph;
  ph.volume = z;
  const double re = to_double(z.re);
  const double im = to_double(z.im);
  ph.theta0 = std::atan2(im, re);
  double vt = ring.dim() * kPi / 2 - ph.theta0;
  vt = std::fmod(vt, 2 * kPi);
  if (vt < 0) vt += 2 * kPi;
  ph.vartheta0 = vt;
  if (!(z.im > 0))
    fail(ErrorKind::NoSupercriticalPhase, "theta0 = " + std::to_string(ph.theta0) + " is not in (0, pi)");
  ph.cot_theta0 = z.re / z.im;
  return ph;
}

/// Phase from a user-supplied theta0; cot is converted exactly from its double value.
template <class Scalar>
Phase<Scalar> phase_from_angle(double theta0)
{
  if (!(theta0 > 0.0 && theta0 < kPi)) fail(ErrorKind::NoSupercriticalPhase, "theta0 must lie in (0, pi)");
  Phase<Scalar> ph;
  ph.theta0 = theta0;
  ph.cot_theta0 = Scalar(std::cos(theta0) / std::sin(theta0));
  return ph;
}

/// (Re - cot theta0 Im)(alpha + i beta)^n . X.
template <class Scalar>
Scalar central_constraint(const ToyRing<Scalar>& ring, const ClassVector<Scalar>& alpha, const ClassVector<Scalar>& beta,
                          const Phase<Scalar>& ph)
{
  const auto z = complex_power_on(ring, ring.cycle("X"), alpha, beta, ring.dim(), ClassVector<Scalar>::zero(ring));
  return z.re - ph.cot_theta0 * z.im;
}

/// Test family alpha_t = base + t direction with background beta.
template <class Scalar = Rational>
struct TestFamilyClass {
  ClassVector<Scalar> base;
  ClassVector<Scalar> direction;
  ClassVector<Scalar> background;
  std::optional<double> threshold;  // declared T beyond which the family dominates cot(theta0/n) chi
};

/// Positivity of `gamma` on every declared curve and gamma^n . X > 0.
template <class Scalar>
bool is_kahler_on_corpus(const ToyRing<Scalar>& ring, const ClassVector<Scalar>& gamma)
{
  for (const auto& y : ring.cycles()) {
    if (y.dim != 1 && y.label != "X") continue;
    std::vector<const std::vector<Scalar>*> f(y.dim, &gamma.coeffs);
    if (!(ring.evaluate(y, f) > 0)) return false;
  }
  return true;
}

template <class Scalar>
TestFamilyClass<Scalar> make_family(const ToyRing<Scalar>& ring, ClassVector<Scalar> base, ClassVector<Scalar> direction,
                                    ClassVector<Scalar> background)
{
  if (!is_kahler_on_corpus(ring, direction)) fail(ErrorKind::HypothesisViolated, "family direction is not Kahler on the corpus");
  return {std::move(base), std::move(direction), std::move(background), std::nullopt};
}

/// (Re - cot theta0 Im)(alpha_t + i beta)^m . Y.
template <class Scalar>
Scalar stab_value(const ToyRing<Scalar>& ring, const std::string& cycle, const TestFamilyClass<Scalar>& fam,
                  const Phase<Scalar>& ph, const Scalar& t)
{
  const auto& y = ring.cycle(cycle);
  const ClassVector<Scalar> at = fam.base + t * fam.direction;
  const auto z = complex_power_on(ring, y, at, fam.background, y.dim, ClassVector<Scalar>::zero(ring));
  return z.re - ph.cot_theta0 * z.im;
}

/// c[k] = binom(m,k) (Re - cot theta0 Im)((alpha + i beta)^k . gamma^{m-k} . Y), so that
/// stab_value(t) = sum_k c[k] t^{m-k}.
template <class Scalar>
std::vector<Scalar> stab_poly_coeffs(const ToyRing<Scalar>& ring, const std::string& cycle,
                                     const TestFamilyClass<Scalar>& fam, const Phase<Scalar>& ph)
{
  const auto& y = ring.cycle(cycle);
  const int m = y.dim;
  std::vector<Scalar> c(m + 1);
  for (int k = 0; k <= m; ++k) {
    const auto z = complex_power_on(ring, y, fam.base, fam.background, k, fam.direction);
    c[k] = binomial<Scalar>(m, k) * (z.re - ph.cot_theta0 * z.im);
  }
  return c;
}

/// Evaluates sum_k c[k] t^{m-k} by Horner.
template <class Scalar>
Scalar eval_stab_poly(const std::vector<Scalar>& c, const Scalar& t)
{
  Scalar acc = 0;
  for (const auto& ck : c) acc = acc * t + ck;
  return acc;
}

/// d/dt of sum_k c[k] t^{m-k}.
template <class Scalar>
Scalar eval_stab_poly_derivative(const std::vector<Scalar>& c, const Scalar& t)
{
  const int m = static_cast<int>(c.size()) - 1;
  Scalar acc = 0;
  for (int k = 0; k < m; ++k) acc = acc * t + c[k] * Scalar(m - k);
  return acc;
}

namespace poly {

/// Polynomials in ascending powers.
template <class Scalar>
using Poly = std::vector<Scalar>;

template <class Scalar>
void trim(Poly<Scalar>& p)
{
  while (!p.empty() && p.back() == 0) p.pop_back();
}

template <class Scalar>
Poly<Scalar> from_stab(const std::vector<Scalar>& c)
{
  Poly<Scalar> p(c.rbegin(), c.rend());
  trim(p);
  return p;
}

template <class Scalar>
Scalar eval(const Poly<Scalar>& p, const Scalar& t)
{
  Scalar acc = 0;
  for (auto it = p.rbegin(); it != p.rend(); ++it) acc = acc * t + *it;
  return acc;
}

template <class Scalar>
Poly<Scalar> derivative(const Poly<Scalar>& p)
{
  Poly<Scalar> d;
  for (std::size_t i = 1; i < p.size(); ++i) d.push_back(p[i] * Scalar(static_cast<int>(i)));
  trim(d);
  return d;
}

/// Remainder of a / b (b nonzero).
template <class Scalar>
Poly<Scalar> remainder(Poly<Scalar> a, const Poly<Scalar>& b)
{
  while (a.size() >= b.size() && !a.empty()) {
    const Scalar f = a.back() / b.back();
    const std::size_t shift = a.size() - b.size();
    for (std::size_t i = 0; i < b.size(); ++i) a[shift + i] -= f * b[i];
    a.pop_back();
    trim(a);
  }
  return a;
}

template <class Scalar>
std::vector<Poly<Scalar>> sturm_chain(const Poly<Scalar>& p)
{
  std::vector<Poly<Scalar>> chain{p, derivative(p)};
  while (!chain.back().empty()) {
    Poly<Scalar> r = remainder(chain[chain.size() - 2], chain.back());
    for (auto& x : r) x = -x;
    if (r.empty()) break;
    chain.push_back(r);
  }
  if (chain.back().empty()) chain.pop_back();
  return chain;
}

template <class Scalar>
int sign_changes(const std::vector<Scalar>& values)
{
  int changes = 0;
  int last = 0;
  for (const auto& v : values) {
    const int s = v > 0 ? 1 : (v < 0 ? -1 : 0);
    if (s == 0) continue;
    if (last != 0 && s != last) ++changes;
    last = s;
  }
  return changes;
}

/// Number of distinct real roots in (lo, hi], both finite.
template <class Scalar>
int roots_in(const std::vector<Poly<Scalar>>& chain, const Scalar& lo, const Scalar& hi)
{
  std::vector<Scalar> a;
  std::vector<Scalar> b;
  for (const auto& q : chain) {
    a.push_back(eval(q, lo));
    b.push_back(eval(q, hi));
  }
  return sign_changes(a) - sign_changes(b);
}

/// Cauchy bound: every root has |t| < 1 + max |p_i / p_lead|.
template <class Scalar>
Scalar root_bound(const Poly<Scalar>& p)
{
  Scalar m = 0;
  for (std::size_t i = 0; i + 1 < p.size(); ++i) {
    Scalar r = p[i] / p.back();
    if (r < 0) r = -r;
    if (r > m) m = r;
  }
  return m + 1;
}

/// Disjoint intervals (lo, hi] of width <= tol, each holding exactly one distinct root of p
/// in (0, bound].
template <class Scalar>
std::vector<std::pair<Scalar, Scalar>> isolate_positive_roots(const Poly<Scalar>& p, const Scalar& tol)
{
  std::vector<std::pair<Scalar, Scalar>> out;
  if (p.size() < 2) return out;
  const auto chain = sturm_chain(p);
  std::vector<std::pair<Scalar, Scalar>> stack{{Scalar(0), root_bound(p)}};
  while (!stack.empty()) {
    auto [lo, hi] = stack.back();
    stack.pop_back();
    const int count = roots_in(chain, lo, hi);
    if (count == 0) continue;
    if (count == 1 && hi - lo <= tol) {
      out.push_back({lo, hi});
      continue;
    }
    const Scalar mid = (lo + hi) / 2;
    stack.push_back({mid, hi});
    stack.push_back({lo, mid});
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace poly

enum class Verdict { Stable, Unstable, Inconclusive };

inline std::string_view to_string(Verdict v)
{
  switch (v) {
    case Verdict::Stable: return "stable";
    case Verdict::Unstable: return "unstable";
    case Verdict::Inconclusive: return "inconclusive";
  }
  return "?";
}

template <class Scalar>
struct CycleVerdict {
  std::string cycle;
  int dim = 0;
  Verdict verdict = Verdict::Inconclusive;
  std::optional<double> witness;      // a t >= 0 where the required sign fails
  std::vector<Scalar> coeffs;         // c[0..m]
  std::string sign_pattern;           // '+', '-', '0' per coefficient
};

struct StabilityOptions {
  std::vector<double> t_grid{0.0, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0};
  bool sturm = true;
};

/// Sign requirement on [0, inf) for sum_k c[k] t^{m-k}: strict for proper cycles, >= 0 for X.
template <class Scalar>
CycleVerdict<Scalar> verdict_for(const std::string& label, int dim, std::vector<Scalar> c, bool strict,
                                 const StabilityOptions& opt)
{
  CycleVerdict<Scalar> out;
  out.cycle = label;
  out.dim = dim;
  out.coeffs = c;
  for (const auto& ck : c) out.sign_pattern += ck > 0 ? '+' : (ck < 0 ? '-' : '0');
  auto bad = [&](const Scalar& v) { return strict ? !(v > 0) : (v < 0); };

  const Scalar at0 = c.back();
  if (bad(at0)) {
    out.verdict = Verdict::Unstable;
    out.witness = 0.0;
    return out;
  }
  bool all_positive = true;
  for (const auto& ck : c) all_positive = all_positive && ck > 0;
  bool nonneg = true;
  for (const auto& ck : c) nonneg = nonneg && !(ck < 0);
  if (all_positive || (!strict && nonneg)) {
    out.verdict = Verdict::Stable;
    return out;
  }
  for (double t : opt.t_grid) {
    if (t < 0) continue;
    if (bad(eval_stab_poly(c, Scalar(t)))) {
      out.verdict = Verdict::Unstable;
      out.witness = t;
      return out;
    }
  }
  if (!opt.sturm) {
    out.verdict = Verdict::Inconclusive;
    return out;
  }
  const auto p = poly::from_stab(c);
  if (p.empty()) {
    out.verdict = strict ? Verdict::Unstable : Verdict::Stable;
    if (strict) out.witness = 0.0;
    return out;
  }
  const auto roots = poly::isolate_positive_roots(p, Scalar(1) / Scalar(1 << 20));
  // Between and beyond the roots p has constant sign; probe one point in each gap.
  std::vector<Scalar> probes;
  Scalar prev = 0;
  for (const auto& [lo, hi] : roots) {
    probes.push_back((prev + lo) / 2);
    prev = hi;
  }
  probes.push_back(prev + 1);
  for (const auto& t : probes) {
    if (bad(poly::eval(p, t))) {
      out.verdict = Verdict::Unstable;
      out.witness = to_double(t);
      return out;
    }
  }
  if (strict && !roots.empty()) {
    out.verdict = Verdict::Unstable;
    out.witness = to_double(Scalar((roots.front().first + roots.front().second) / 2));
    return out;
  }
  out.verdict = Verdict::Stable;
  return out;
}

template <class Scalar>
std::vector<CycleVerdict<Scalar>> check_stable(const ToyRing<Scalar>& ring, const TestFamilyClass<Scalar>& fam,
                                               const Phase<Scalar>& ph, const std::vector<std::string>& cycles,
                                               const StabilityOptions& opt = {})
{
  std::vector<CycleVerdict<Scalar>> out;
  for (const auto& label : cycles) {
    const auto& y = ring.cycle(label);
    out.push_back(verdict_for(label, y.dim, stab_poly_coeffs(ring, label, fam, ph), y.dim < ring.dim(), opt));
  }
  return out;
}

/// Uniform version: subtracts (n - m) eps (chi^m . Y) and asks for >= 0 on proper cycles
/// (eps = 0 falls back to the strict check).
template <class Scalar>
std::vector<CycleVerdict<Scalar>> check_uniform_stable(const ToyRing<Scalar>& ring, const TestFamilyClass<Scalar>& fam,
                                                       const Phase<Scalar>& ph, const Scalar& eps,
                                                       const ClassVector<Scalar>& chi,
                                                       const std::vector<std::string>& cycles,
                                                       const StabilityOptions& opt = {})
{
  if (eps < 0) fail(ErrorKind::HypothesisViolated, "eps must be >= 0");
  if (eps == 0) return check_stable(ring, fam, ph, cycles, opt);
  std::vector<CycleVerdict<Scalar>> out;
  for (const auto& label : cycles) {
    const auto& y = ring.cycle(label);
    auto c = stab_poly_coeffs(ring, label, fam, ph);
    std::vector<const std::vector<Scalar>*> f(y.dim, &chi.coeffs);
    c.back() -= Scalar(ring.dim() - y.dim) * eps * ring.evaluate(y, f);
    out.push_back(verdict_for(label, y.dim, c, false, opt));
  }
  return out;
}

template <class Scalar>
struct HypothesisRow {
  std::string cycle;
  int k = 0;
  Scalar value = 0;
  bool ok = false;  // >= 0 on X, > 0 on proper cycles
};

/// (Re - cot theta0 Im)((alpha + i beta)^k . gamma^{m-k} . Y) for every cycle and 1 <= k <= m.
template <class Scalar>
std::vector<HypothesisRow<Scalar>> corollary_C_hypotheses(const ToyRing<Scalar>& ring, const ClassVector<Scalar>& alpha,
                                                          const ClassVector<Scalar>& beta,
                                                          const ClassVector<Scalar>& gamma, const Phase<Scalar>& ph,
                                                          const std::vector<std::string>& cycles)
{
  std::vector<HypothesisRow<Scalar>> rows;
  for (const auto& label : cycles) {
    const auto& y = ring.cycle(label);
    for (int k = 1; k <= y.dim; ++k) {
      const auto z = complex_power_on(ring, y, alpha, beta, k, gamma);
      HypothesisRow<Scalar> r;
      r.cycle = label;
      r.k = k;
      r.value = z.re - ph.cot_theta0 * z.im;
      r.ok = y.dim == ring.dim() ? !(r.value < 0) : r.value > 0;
      rows.push_back(r);
    }
  }
  return rows;
}

}  // namespace dhym

#endif  // DHYM_INTERSECTION_RING_HPP
