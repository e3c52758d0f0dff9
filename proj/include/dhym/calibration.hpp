#ifndef DHYM_CALIBRATION_HPP
#define DHYM_CALIBRATION_HPP

// Empirical constants for the semi-continuity and uniform continuity statements and for the
// S/G domination bound. Each value is a safety factor times the worst case seen in a seeded
// sweep over boundary configurations.
//
// Table schema (JSON):
//   { "schema_version": 1, "seed": N, "samples": N, "safety": s,
//     "entries": [ { "key": "c0_Q" | "c0_P" | "sigma0_Q" | "sigma0_P" | "C_terms",
//                    "n": int, "theta": radians (0 for C_terms), "value": double,
//                    "observed": double, "analytic": double (c0 only, else null) } ] }

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <future>
#include <optional>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "json.hpp"

#include "dhym/error.hpp"
#include "dhym/form_algebra.hpp"
#include "dhym/hermitian_core.hpp"
#include "dhym/random.hpp"

namespace dhym {

inline constexpr int kCalibrationSchema = 1;

struct CalibrationEntry {
  std::string key;
  int n = 0;
  double theta = 0.0;
  double value = 0.0;
  double observed = 0.0;
  std::optional<double> analytic;
};

class CalibrationTable {
 public:
  std::uint64_t seed = 0;
  int samples = 0;
  double safety = 0.5;

  void add(CalibrationEntry e) { entries_.push_back(std::move(e)); }
  const std::vector<CalibrationEntry>& entries() const { return entries_; }

  const CalibrationEntry* find(const std::string& key, int n, double theta) const
  {
    for (const auto& e : entries_)
      if (e.key == key && e.n == n && std::abs(e.theta - theta) <= 1e-12) return &e;
    return nullptr;
  }

  double get(const std::string& key, int n, double theta = 0.0) const
  {
    if (const auto* e = find(key, n, theta)) return e->value;
    fail(ErrorKind::ConfigError,
         "calibration table has no entry " + key + " for n=" + std::to_string(n) + " theta=" + std::to_string(theta));
  }

  std::vector<double> thetas(const std::string& key, int n) const
  {
    std::vector<double> out;
    for (const auto& e : entries_)
      if (e.key == key && e.n == n) out.push_back(e.theta);
    std::sort(out.begin(), out.end());
    return out;
  }

  nlohmann::json to_json() const
  {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& e : entries_) {
      nlohmann::json j = {{"key", e.key}, {"n", e.n}, {"theta", e.theta}, {"value", e.value}, {"observed", e.observed}};
      j["analytic"] = e.analytic ? nlohmann::json(*e.analytic) : nlohmann::json(nullptr);
      arr.push_back(j);
    }
    return {{"schema_version", kCalibrationSchema}, {"seed", seed}, {"samples", samples}, {"safety", safety},
            {"entries", arr}};
  }

  static CalibrationTable from_json(const nlohmann::json& j)
  {
    if (j.value("schema_version", 0) != kCalibrationSchema)
      fail(ErrorKind::ConfigError, "unsupported calibration schema_version");
    CalibrationTable t;
    t.seed = j.at("seed").get<std::uint64_t>();
    t.samples = j.at("samples").get<int>();
    t.safety = j.at("safety").get<double>();
    for (const auto& e : j.at("entries")) {
      CalibrationEntry c;
      c.key = e.at("key").get<std::string>();
      c.n = e.at("n").get<int>();
      c.theta = e.at("theta").get<double>();
      c.value = e.at("value").get<double>();
      c.observed = e.at("observed").get<double>();
      if (!e.at("analytic").is_null()) c.analytic = e.at("analytic").get<double>();
      if (!(c.value > 0.0)) fail(ErrorKind::ConfigError, "calibration value must be positive: " + c.key);
      t.add(c);
    }
    return t;
  }

  static CalibrationTable load(const std::string& path)
  {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::ConfigError, "cannot open calibration table " + path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& ex) {
      fail(ErrorKind::ParseError, "calibration table " + path + ": " + ex.what());
    }
    return from_json(j);
  }

  void save(const std::string& path) const
  {
    std::ofstream out(path);
    if (!out) fail(ErrorKind::ConfigError, "cannot write calibration table " + path);
    out << to_json().dump(2) << "\n";
  }

 private:
  std::vector<CalibrationEntry> entries_;
};

/// Provable lower bound for c0 from the mean value argument: on the boundary Q = theta the
/// smallest eigenvalue lies in [cot theta, cot(theta/n)], so arctan has slope at least
/// 1/(1 + max(cot^2 theta, (cot(theta/n) + theta)^2)) along [lambda_1, lambda_1 + eps].
inline double c0_analytic(int terms, double theta)
{
  if (terms == 0) return 1.0;
  const double lo = cot(theta);
  const double hi = cot(theta / terms) + theta;
  return 1.0 / (1.0 + std::max(lo * lo, hi * hi));
}

namespace detail {

/// Ascending spectrum with `terms` arccot values summing to `total`; mixes spread-out and
/// concentrated angle splits.
inline RealVector boundary_spectrum(int terms, double total, Rng& rng)
{
  RealVector w(terms);
  const double power = uniform(rng) < 0.4 ? 4.0 : 1.0;
  for (int i = 0; i < terms; ++i) w(i) = std::pow(-std::log(uniform(rng, 1e-12, 1.0)), power);
  w /= w.sum();
  RealVector lambda(terms);
  for (int i = 0; i < terms; ++i) lambda(i) = cot(std::clamp(total * w(i), 1e-9, kPi - 1e-9));
  std::sort(lambda.data(), lambda.data() + terms);
  return lambda;
}

/// Spectrum of size n whose angle of the given kind is `total`. For P the top eigenvalue is
/// free and placed above the others.
inline RealVector boundary_spectrum(AngleKind kind, int n, double total, Rng& rng)
{
  if (kind == AngleKind::Q) return boundary_spectrum(n, total, rng);
  RealVector lambda(n);
  if (n > 1) lambda.head(n - 1) = boundary_spectrum(n - 1, total, rng);
  const double top = n > 1 ? lambda(n - 2) : gaussian(rng) * 3.0;
  lambda(n - 1) = top + std::abs(gaussian(rng)) * std::exp(uniform(rng, -3.0, 3.0));
  return lambda;
}

template <class Fn>
auto sharded(int jobs, int shards, Fn fn) -> std::vector<decltype(fn(0))>
{
  using R = decltype(fn(0));
  std::vector<R> out(shards);
  jobs = std::max(1, std::min(jobs, shards));
  std::vector<std::thread> pool;
  std::atomic<int> next{0};
  for (int t = 0; t < jobs; ++t)
    pool.emplace_back([&] {
      for (int s = next++; s < shards; s = next++) out[s] = fn(s);
    });
  for (auto& th : pool) th.join();
  return out;
}

}  // namespace detail

/// Smallest observed (theta - angle(lambda + eps)) / eps over boundary spectra with
/// angle(lambda) = theta and eps in (0, theta).
inline double sweep_c0(AngleKind kind, int n, double theta, int samples, std::uint64_t seed)
{
  Rng rng = shard_rng(seed, 0x63300000u + 16u * n + (kind == AngleKind::P ? 1u : 0u));
  double worst = std::numeric_limits<double>::infinity();
  for (int s = 0; s < samples; ++s) {
    const RealVector lambda = detail::boundary_spectrum(kind, n, theta, rng);
    const double eps = uniform(rng) < 0.2 ? theta * (1.0 - 1e-9) : std::exp(uniform(rng, std::log(1e-6), std::log(theta)));
    const RealVector shifted = lambda.array() + eps;
    // Clamping can move the base angle by ~1e-9, so measure the drop from the actual base.
    // P in dimension one is identically zero and never reaches theta; measure from theta there.
    const double base = (kind == AngleKind::P && n == 1) ? theta : angle(kind, lambda, n);
    const double value = (base - angle(kind, shifted, n)) / eps;
    worst = std::min(worst, value);
  }
  return worst;
}

/// One random hypothesis of the uniform continuity statement with chi3 = I (the general case
/// reduces to this by congruence) and the angle of chi2 at the boundary value theta.
struct ContinuityHypothesis {
  HermMatrix chi1, chi2, chi3, form;
};

inline std::optional<ContinuityHypothesis> sample_continuity_hypothesis(AngleKind kind, int n, double theta,
                                                                        double sigma, Rng& rng,
                                                                        double boundary_shrink = 1e-9)
{
  const double s5 = std::pow(sigma, 5);
  ContinuityHypothesis h;
  h.chi3 = HermMatrix::Identity(n, n);
  const double lo = uniform(rng) < 0.5 ? s5 : 0.05;
  h.chi2 = random_posdef(n, rng, lo, 4.0);
  // Extremal differences (eigenvalues +-1) half of the time, otherwise a scaled random one.
  HermMatrix e;
  if (uniform(rng) < 0.5) {
    RealVector signs(n);
    for (int i = 0; i < n; ++i) signs(i) = uniform(rng) < 0.5 ? -1.0 : 1.0;
    const Eigen::MatrixXcd u = random_unitary(n, rng);
    e = hermitian_part(u * signs.cast<cplx>().asDiagonal() * u.adjoint());
  } else {
    e = random_hermitian(n, rng);
    e /= hermitian_eigenvalues(e).cwiseAbs().maxCoeff();
    e *= uniform(rng);
  }
  h.chi1 = h.chi2 + s5 * e;
  if (!(min_eigenvalue(h.chi1) > 0.0) || !loewner_leq(h.chi1, 4.0 * h.chi3, 0.0)) return std::nullopt;
  const RealVector lambda = detail::boundary_spectrum(kind, n, theta * (1.0 - boundary_shrink), rng);
  h.form = form_with_spectrum(h.chi2, lambda, rng);
  if (!(angle(kind, eigenvalues_rel(RelativePair(h.chi2, h.form)), n) < theta)) return std::nullopt;
  return h;
}

inline bool continuity_conclusion(AngleKind kind, const ContinuityHypothesis& h, double sigma, double theta,
                                  double tol = 1e-9)
{
  const int n = static_cast<int>(h.form.rows());
  return angle(kind, eigenvalues_rel(RelativePair(h.chi1, h.form + sigma * h.chi3)), n) < theta - tol;
}

/// Largest sigma on a geometric ladder such that it and every smaller rung show no violation.
inline double sweep_sigma0(AngleKind kind, int n, double theta, int samples, std::uint64_t seed)
{
  std::vector<double> ladder;
  for (double s = 2.0; s > 1e-3; s *= 0.9) ladder.push_back(s);
  std::reverse(ladder.begin(), ladder.end());
  double accepted = 0.0;
  for (std::size_t r = 0; r < ladder.size(); ++r) {
    const double sigma = ladder[r];
    Rng rng = shard_rng(seed, 0x51600000u + 64u * n + 2u * r + (kind == AngleKind::P ? 1u : 0u));
    bool ok = true;
    for (int s = 0; s < samples && ok; ++s) {
      auto h = sample_continuity_hypothesis(kind, n, theta, sigma, rng);
      if (h && !continuity_conclusion(kind, *h, sigma, theta)) ok = false;
    }
    if (!ok) break;
    accepted = sigma;
  }
  return accepted;
}

/// Whether the squeezed-angle preconditions hold for (theta, sigma).
inline bool squeezed_admissible(double theta, double sigma)
{
  return sigma > 0.0 && theta + sigma < kPi && std::sin(theta + sigma) >= sigma / 2;
}

/// Random S/G hypothesis: chi3 = I, chid with |chid| <= sigma^4, Q_{chi2}(omega) < theta.
struct TermsHypothesis {
  HermMatrix omega, chi2, chi3, chid;
  double theta = 0.0;
  double sigma = 0.0;
};

inline TermsHypothesis sample_terms_hypothesis(int n, Rng& rng)
{
  TermsHypothesis h;
  for (;;) {
    h.theta = uniform(rng, 0.2, 3.0);
    h.sigma = std::exp(uniform(rng, std::log(0.01), std::log(0.3)));
    if (squeezed_admissible(h.theta, h.sigma)) break;
  }
  h.chi3 = HermMatrix::Identity(n, n);
  h.chi2 = random_posdef(n, rng, 0.05, 4.0);
  HermMatrix e = random_hermitian(n, rng);
  e /= hermitian_eigenvalues(e).cwiseAbs().maxCoeff();
  h.chid = std::pow(h.sigma, 4) * uniform(rng) * e;
  const RealVector lambda = detail::boundary_spectrum(n, h.theta * uniform(rng, 0.5, 1.0 - 1e-9), rng);
  h.omega = form_with_spectrum(h.chi2, lambda, rng);
  return h;
}

/// Largest observed C needed for G + S <= sigma^k (1 - C sigma^2) Im(...) ^ chi3^k.
inline double sweep_terms_c(int n, int samples, std::uint64_t seed)
{
  Rng rng = shard_rng(seed, 0x7e000000u + n);
  double worst = 0.0;
  for (int s = 0; s < samples; ++s) {
    const TermsHypothesis h = sample_terms_hypothesis(n, rng);
    for (int k = 1; k <= n; ++k)
      worst = std::max(worst, terms_block(h.omega, h.chi2, h.chi3, h.chid, h.theta, h.sigma, k).required_c);
  }
  return worst;
}

struct CalibrationOptions {
  std::vector<int> dims{1, 2, 3, 4, 5};
  std::vector<double> thetas{0.3, 0.6, 0.9, 1.2, 1.5, 1.8, 2.1, 2.4, 2.7, 3.0};
  std::vector<int> terms_dims{2, 3, 4};
  int samples = 4000;
  int terms_samples = 300;
  std::uint64_t seed = 20240611;
  double safety = 0.5;
  double terms_inflation = 1.25;
  int jobs = 1;
};

inline CalibrationTable run_calibration(const CalibrationOptions& opt)
{
  CalibrationTable table;
  table.seed = opt.seed;
  table.samples = opt.samples;
  table.safety = opt.safety;

  struct Task {
    std::string key;
    AngleKind kind;
    int n;
    double theta;
  };
  std::vector<Task> tasks;
  for (int n : opt.dims)
    for (double theta : opt.thetas)
      for (AngleKind kind : {AngleKind::Q, AngleKind::P}) {
        tasks.push_back({std::string("c0_") + std::string(to_string(kind)), kind, n, theta});
        tasks.push_back({std::string("sigma0_") + std::string(to_string(kind)), kind, n, theta});
      }
  for (int n : opt.terms_dims) tasks.push_back({"C_terms", AngleKind::Q, n, 0.0});

  auto results = detail::sharded(opt.jobs, static_cast<int>(tasks.size()), [&](int i) {
    const Task& t = tasks[i];
    CalibrationEntry e;
    e.key = t.key;
    e.n = t.n;
    e.theta = t.theta;
    if (t.key.starts_with("c0_")) {
      e.observed = sweep_c0(t.kind, t.n, t.theta, opt.samples, opt.seed);
      const int terms = t.kind == AngleKind::Q ? t.n : t.n - 1;
      e.analytic = c0_analytic(terms, t.theta);
      e.value = std::min(opt.safety * e.observed, 1.0);
    } else if (t.key.starts_with("sigma0_")) {
      e.observed = sweep_sigma0(t.kind, t.n, t.theta, std::max(1, opt.samples / 4), opt.seed);
      e.value = opt.safety * e.observed;
    } else {
      e.observed = sweep_terms_c(t.n, opt.terms_samples, opt.seed);
      e.value = std::max(opt.terms_inflation * e.observed, 1e-3);
    }
    return e;
  });
  for (auto& e : results) table.add(std::move(e));
  return table;
}

}  // namespace dhym

#endif  // DHYM_CALIBRATION_HPP
