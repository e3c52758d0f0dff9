#ifndef DHYM_HERMITIAN_CORE_HPP
#define DHYM_HERMITIAN_CORE_HPP

// Angle functionals on pairs (A, B) of Hermitian matrices, A > 0.
//
// With lambda_1 <= ... <= lambda_n the eigenvalues of A^{-1} B,
//   Q_k(A, B) = max over k-subsets J of  sum_{j in J} arccot(lambda_j),
//   P_k(A, B) = Q_{k-1}(A, B),  P_1 = 0.
// arccot maps R onto (0, pi) continuously and decreasingly, so the maximum is attained
// on the k smallest eigenvalues.

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dhym/error.hpp"
#include "dhym/linalg.hpp"
#include "dhym/random.hpp"

namespace dhym {

enum class AngleKind { P, Q };

inline std::string_view to_string(AngleKind kind) { return kind == AngleKind::P ? "P" : "Q"; }

/// arccot on the branch (0, pi): pi/2 - arctan(x). No jump at 0.
inline double arccot(double x) { return kPi / 2 - std::atan(x); }

inline double cot(double x) { return std::cos(x) / std::sin(x); }

/// A positive definite metric together with a Hermitian form.
class RelativePair {
 public:
  RelativePair(HermMatrix metric, HermMatrix form)
      : metric_(std::move(metric)), form_(std::move(form)), reduction_(metric_)
  {
    if (form_.rows() != metric_.rows() || form_.cols() != metric_.cols())
      fail(ErrorKind::HypothesisViolated, "metric and form dimensions differ");
    if (!is_hermitian(form_)) fail(ErrorKind::HypothesisViolated, "form is not Hermitian");
  }

  static RelativePair identity_metric(const HermMatrix& form)
  {
    return RelativePair(HermMatrix::Identity(form.rows(), form.cols()), form);
  }

  int dim() const { return static_cast<int>(metric_.rows()); }
  const HermMatrix& metric() const { return metric_; }
  const HermMatrix& form() const { return form_; }
  const MetricReduction& reduction() const { return reduction_; }

  /// Same metric, form replaced.
  RelativePair with_form(const HermMatrix& form) const { return RelativePair(metric_, form); }

 private:
  HermMatrix metric_;
  HermMatrix form_;
  MetricReduction reduction_;
};

/// Angle constants: theta0 < Theta0 < pi, and for the product constructions
/// zeta_K = m arccot(K), theta_tilde0 = theta0 + zeta_K.
struct AngleBudget {
  double theta0 = kPi / 2;
  double Theta0 = kPi / 2;
  double theta_tilde0 = kPi / 2;
  double K = 1.0;
  double zeta_K = 0.0;

  static AngleBudget make(double theta0, double Theta0, double K = 1.0, int m = 0)
  {
    AngleBudget b;
    b.theta0 = theta0;
    b.Theta0 = Theta0;
    b.K = K;
    b.zeta_K = m * arccot(K);
    b.theta_tilde0 = theta0 + b.zeta_K;
    return b;
  }

  /// Names of the violated invariants for dimension n (empty when all hold).
  /// `check_k_window` adds the cot((pi - Theta0)/n) < K < cot(Theta0 - theta0) window.
  std::vector<std::string> violations(int n, bool check_k_window = false) const
  {
    std::vector<std::string> out;
    if (!(theta0 > 0.0 && theta0 < kPi)) out.emplace_back("theta0 in (0, pi)");
    if (!(Theta0 > theta0 && Theta0 < kPi)) out.emplace_back("Theta0 in (theta0, pi)");
    if (!(Theta0 - theta0 < (kPi - Theta0) / n)) out.emplace_back("Theta0 - theta0 < (pi - Theta0)/n");
    if (!(K > 0.0)) out.emplace_back("K > 0");
    if (!(theta_tilde0 < kPi)) out.emplace_back("theta_tilde0 < pi");
    if (check_k_window) {
      if (!(cot((kPi - Theta0) / n) < K && K < cot(Theta0 - theta0)))
        out.emplace_back("cot((pi - Theta0)/n) < K < cot(Theta0 - theta0)");
    }
    return out;
  }
};

/// Open interval of admissible K for the product-space construction on an n-fold.
inline std::pair<double, double> k_window(int n, double theta0, double Theta0)
{
  return {cot((kPi - Theta0) / n), cot(Theta0 - theta0)};
}

inline RealVector eigenvalues_rel(const RelativePair& pair)
{
  return pair.reduction().eigenvalues(pair.form());
}

inline void check_order(int n, int k)
{
  if (k < 1 || k > n) fail(ErrorKind::BadOrder, "order " + std::to_string(k) + " outside 1.." + std::to_string(n));
}

/// Q_k from an ascending spectrum.
inline double angle_Q(const RealVector& ascending, int k)
{
  check_order(static_cast<int>(ascending.size()), k);
  double sum = 0.0;
  for (int i = 0; i < k; ++i) sum += arccot(ascending(i));
  return sum;
}

inline double angle_P(const RealVector& ascending, int k)
{
  check_order(static_cast<int>(ascending.size()), k);
  return k == 1 ? 0.0 : angle_Q(ascending, k - 1);
}

inline double angle(AngleKind kind, const RealVector& ascending, int k)
{
  return kind == AngleKind::P ? angle_P(ascending, k) : angle_Q(ascending, k);
}

inline double angle_Q(const RelativePair& pair, int k) { return angle_Q(eigenvalues_rel(pair), k); }
inline double angle_P(const RelativePair& pair, int k) { return angle_P(eigenvalues_rel(pair), k); }

/// Full-order angle of `form` relative to `metric`.
inline double angle_of(AngleKind kind, const HermMatrix& metric, const HermMatrix& form)
{
  RelativePair pair(metric, form);
  return angle(kind, eigenvalues_rel(pair), pair.dim());
}

/// Membership in Gamma(theta0, Theta0): P_n < theta0 and Q_n < Theta0, strict by `margin`.
inline bool in_gamma(const RelativePair& pair, const AngleBudget& budget, double margin = 0.0)
{
  const RealVector lambda = eigenvalues_rel(pair);
  const int n = pair.dim();
  return angle_P(lambda, n) < budget.theta0 - margin && angle_Q(lambda, n) < budget.Theta0 - margin;
}

/// Sum of arccot over the eigenvalues of the compression U^* B U of B to the span of an
/// orthonormal frame U (n x k).
inline double frame_value(const HermMatrix& form, const Eigen::MatrixXcd& frame)
{
  const RealVector mu = hermitian_eigenvalues(frame.adjoint() * form * frame);
  double sum = 0.0;
  for (int i = 0; i < mu.size(); ++i) sum += arccot(mu(i));
  return sum;
}

/// Orthonormalizes the columns of `raw`; throws DegenerateFrame when they are (numerically)
/// dependent.
inline Eigen::MatrixXcd orthonormal_frame(const Eigen::MatrixXcd& raw, double rel_tol = 1e-10)
{
  Eigen::HouseholderQR<Eigen::MatrixXcd> qr(raw);
  const Eigen::MatrixXcd& r = qr.matrixQR();
  const double scale = std::max(raw.norm(), 1e-300);
  for (int j = 0; j < raw.cols(); ++j)
    if (std::abs(r(j, j)) <= rel_tol * scale)
      fail(ErrorKind::DegenerateFrame, "frame column " + std::to_string(j) + " is dependent");
  return qr.householderQ() * Eigen::MatrixXcd::Identity(raw.rows(), raw.cols());
}

/// Max of frame_value over `trials` random orthonormal k-frames (and any `extra_frames`).
/// Requires the identity metric; reduce with MetricReduction first.
inline double variational_Q(const RelativePair& pair, int k, int trials, std::uint64_t seed,
                            const std::vector<Eigen::MatrixXcd>& extra_frames = {})
{
  const int n = pair.dim();
  check_order(n, k);
  if (trials < 1) fail(ErrorKind::HypothesisViolated, "trials must be >= 1");
  if ((pair.metric() - HermMatrix::Identity(n, n)).norm() > 1e-12)
    fail(ErrorKind::HypothesisViolated, "variational_Q expects the identity metric");
  Rng rng(seed);
  double best = -1.0;
  for (int t = 0; t < trials; ++t) {
    const Eigen::MatrixXcd frame = orthonormal_frame(complex_gaussian_matrix(n, k, rng));
    best = std::max(best, frame_value(pair.form(), frame));
  }
  for (const auto& frame : extra_frames) best = std::max(best, frame_value(pair.form(), orthonormal_frame(frame)));
  return best;
}

/// Frame spanned by the eigenvectors of the k smallest eigenvalues (the maximizer).
inline Eigen::MatrixXcd optimal_frame(const HermMatrix& form, int k)
{
  Eigen::SelfAdjointEigenSolver<HermMatrix> solver(hermitian_part(form));
  return solver.eigenvectors().leftCols(k);
}

struct MarginResult {
  double lhs = 0.0;
  double bound = 0.0;
  bool holds = false;
};

/// Semi-continuity of the top-order angle under B -> B + eps A:
/// reports angle(A, B + eps A) against theta - c0 eps.
inline MarginResult semicontinuity_margin(const RelativePair& pair, double theta, double eps, double c0,
                                          AngleKind kind = AngleKind::Q, double tol = 1e-9)
{
  const int n = pair.dim();
  const double base = angle(kind, eigenvalues_rel(pair), n);
  if (!(base < theta))
    fail(ErrorKind::HypothesisViolated, std::string(to_string(kind)) + " = " + std::to_string(base) + " >= theta");
  if (!(eps > 0.0 && eps < theta)) fail(ErrorKind::HypothesisViolated, "need 0 < eps < theta");
  MarginResult r;
  r.lhs = angle(kind, eigenvalues_rel(pair.with_form(pair.form() + eps * pair.metric())), n);
  r.bound = theta - c0 * eps;
  r.holds = r.lhs < r.bound - tol;
  return r;
}

/// Hypotheses of the uniform continuity statement; returns the first violated one.
inline std::optional<std::string> uniform_continuity_violation(const HermMatrix& chi1, const HermMatrix& chi2,
                                                               const HermMatrix& chi3, double sigma,
                                                               double tol = 1e-12)
{
  for (const auto* chi : {&chi1, &chi2, &chi3})
    if (!(min_eigenvalue(*chi) > 0.0)) return "chi_i > 0";
  if (!loewner_leq(chi1, 4.0 * chi3, tol)) return "chi1 <= 4 chi3";
  if (!loewner_leq(chi2, 4.0 * chi3, tol)) return "chi2 <= 4 chi3";
  const double s5 = std::pow(sigma, 5);
  if (!loewner_leq(chi1 - chi2, s5 * chi3, tol)) return "chi1 - chi2 <= sigma^5 chi3";
  if (!loewner_leq(-s5 * chi3, chi1 - chi2, tol)) return "-sigma^5 chi3 <= chi1 - chi2";
  return std::nullopt;
}

/// Conclusion of the uniform continuity statement: angle_{chi1}(B + sigma chi3) < theta,
/// given angle_{chi2}(B) < theta, the metric comparison hypotheses and sigma < sigma0.
inline bool uniform_continuity_check(const HermMatrix& chi1, const HermMatrix& chi2, const HermMatrix& chi3,
                                     const HermMatrix& form, double sigma, double theta, double sigma0,
                                     AngleKind kind = AngleKind::Q, double tol = 1e-9)
{
  if (!(sigma > 0.0 && sigma < sigma0))
    fail(ErrorKind::HypothesisViolated, "sigma outside the calibrated range (0, sigma0)");
  if (auto v = uniform_continuity_violation(chi1, chi2, chi3, sigma)) fail(ErrorKind::HypothesisViolated, *v);
  const int n = static_cast<int>(form.rows());
  if (!(angle(kind, eigenvalues_rel(RelativePair(chi2, form)), n) < theta))
    fail(ErrorKind::HypothesisViolated, "angle relative to chi2 is not below theta");
  return angle(kind, eigenvalues_rel(RelativePair(chi1, form + sigma * chi3)), n) < theta - tol;
}

/// Angle of cot(theta0/n) chi + rho xi relative to chi + rho^n xi, where mu are the
/// eigenvalues of chi relative to xi and n is the ambient dimension (default |mu|).
inline double solvability_margin(const RealVector& mu, double rho, double theta0, int n = 0)
{
  if (n == 0) n = static_cast<int>(mu.size());
  if (!(rho > 0.0 && rho < 1.0)) fail(ErrorKind::HypothesisViolated, "rho must lie in (0,1)");
  if (!(std::pow(rho, n - 1) < std::tan(theta0 / n)))
    fail(ErrorKind::HypothesisViolated, "rho^(n-1) < tan(theta0/n) fails");
  if (mu.size() > n) fail(ErrorKind::HypothesisViolated, "more eigenvalues than the ambient dimension");
  const double c = cot(theta0 / n);
  double sum = 0.0;
  for (int i = 0; i < mu.size(); ++i) {
    if (!(mu(i) > 0.0)) fail(ErrorKind::HypothesisViolated, "mu must be positive");
    sum += arccot((c * mu(i) + rho) / (mu(i) + std::pow(rho, n)));
  }
  if (!(sum < theta0)) fail(ErrorKind::HypothesisViolated, "angle margin not below theta0");
  return sum;
}

}  // namespace dhym

#endif  // DHYM_HERMITIAN_CORE_HPP
