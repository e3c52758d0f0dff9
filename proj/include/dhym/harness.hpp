#ifndef DHYM_HARNESS_HPP
#define DHYM_HARNESS_HPP

// Experiment driver shared by the command-line tool and the acceptance binary.
//
// One INI file configures every subcommand:
//   [general]   seed, out, jobs, calibration
//   [angles]    dims, samples, tol_monotone, tol_concave, boundary_gap,
//               variational_dims, variational_pairs, frames, tol_frame, tol_optimal,
//               continuity_samples (used when general.calibration names a table)
//   [stability] ring (path or builtin:NAME), alpha, beta, direction, background, cycles, uniform_eps
//   [solve]     problem, tol, max_iter, path_steps, damping
//   [mollify]   chart, radii, tol, dump_radius
//   [calibrate] dims, thetas, terms_dims, samples, terms_samples, safety
// Relative paths resolve against the directory of the config file.
//
// Reports are JSON on stdout and in the output directory; each table is also written as CSV.
// Nothing time-dependent enters a report, so equal configs give byte-identical files.

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "dhym/calibration.hpp"
#include "dhym/chart.hpp"
#include "dhym/error.hpp"
#include "dhym/hermitian_core.hpp"
#include "dhym/random.hpp"
#include "dhym/ring_io.hpp"
#include "dhym/torus_solver.hpp"

namespace dhym::harness {

inline constexpr int kReportSchema = 1;
inline constexpr const char* kOutEnv = "DHYM_OUT";

enum ExitCode : int {
  kExitOk = 0,
  kExitInternal = 1,
  kExitPrecondition = 2,
  kExitConeEscape = 3,
  kExitMaxIterations = 4,
};

inline int exit_code(ErrorKind kind)
{
  switch (kind) {
    case ErrorKind::ConeEscape: return kExitConeEscape;
    case ErrorKind::MaxIterations: return kExitMaxIterations;
    default: return kExitPrecondition;
  }
}

namespace detail {

inline std::string trim(const std::string& s)
{
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep)
{
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) {
    cur = trim(cur);
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

inline std::vector<std::string> words(const std::string& s)
{
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

inline double to_number(const std::string& s, const std::string& what)
{
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  fail(ErrorKind::ParseError, what + ": not a number '" + s + "'");
}

inline int to_int(const std::string& s, const std::string& what)
{
  const double v = to_number(s, what);
  if (v != std::floor(v)) fail(ErrorKind::ParseError, what + ": not an integer '" + s + "'");
  return static_cast<int>(v);
}

inline std::string format_double(double v)
{
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string strip_comment(const std::string& line)
{
  const auto pos = line.find('#');
  return trim(pos == std::string::npos ? line : line.substr(0, pos));
}

}  // namespace detail

/// Parsed INI file plus the command-line overrides.
class Config {
 public:
  std::uint64_t seed = 42;
  int jobs = 1;
  std::filesystem::path out_dir;
  std::filesystem::path base_dir = ".";

  static Config parse(const std::string& text, const std::filesystem::path& base_dir = ".")
  {
    Config c;
    std::istringstream in(text);
    try {
      boost::property_tree::ini_parser::read_ini(in, c.tree_);
    } catch (const boost::property_tree::ini_parser_error& e) {
      fail(ErrorKind::ConfigError, "line " + std::to_string(e.line()) + ": " + e.message());
    }
    c.base_dir = base_dir;
    c.validate_keys();
    c.seed = static_cast<std::uint64_t>(c.integer("general.seed", 42));
    c.jobs = c.integer("general.jobs", 1);
    if (c.jobs < 1) fail(ErrorKind::ConfigError, "general.jobs must be >= 1");
    if (c.has("general.out")) c.out_dir = c.path("general.out");
    return c;
  }

  static Config load(const std::filesystem::path& file)
  {
    std::ifstream in(file);
    if (!in) fail(ErrorKind::ConfigError, "cannot open config " + file.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), file.parent_path().empty() ? "." : file.parent_path());
  }

  bool has(const std::string& key) const { return tree_.get_optional<std::string>(key).has_value(); }

  std::string text(const std::string& key, const std::string& fallback) const
  {
    return detail::trim(tree_.get<std::string>(key, fallback));
  }

  double number(const std::string& key, double fallback) const
  {
    if (!has(key)) return fallback;
    try {
      return detail::to_number(text(key, ""), key);
    } catch (const Error& e) {
      fail(ErrorKind::ConfigError, e.what());
    }
  }

  int integer(const std::string& key, int fallback) const
  {
    if (!has(key)) return fallback;
    try {
      return detail::to_int(text(key, ""), key);
    } catch (const Error& e) {
      fail(ErrorKind::ConfigError, e.what());
    }
  }

  /// A tolerance or width: must be positive.
  double positive(const std::string& key, double fallback) const
  {
    const double v = number(key, fallback);
    if (!(v > 0.0)) fail(ErrorKind::ConfigError, key + " must be positive (got " + detail::format_double(v) + ")");
    return v;
  }

  std::vector<double> numbers(const std::string& key, std::vector<double> fallback) const
  {
    if (!has(key)) return fallback;
    std::vector<double> out;
    for (const auto& s : detail::split(text(key, ""), ',')) {
      try {
        out.push_back(detail::to_number(s, key));
      } catch (const Error& e) {
        fail(ErrorKind::ConfigError, e.what());
      }
    }
    return out;
  }

  std::vector<int> integers(const std::string& key, std::vector<int> fallback) const
  {
    if (!has(key)) return fallback;
    std::vector<int> out;
    for (double v : numbers(key, {})) {
      if (v != std::floor(v)) fail(ErrorKind::ConfigError, key + " must list integers");
      out.push_back(static_cast<int>(v));
    }
    return out;
  }

  std::vector<std::string> strings(const std::string& key) const { return detail::split(text(key, ""), ','); }

  std::filesystem::path path(const std::string& key) const
  {
    const std::string v = text(key, "");
    if (v.empty()) fail(ErrorKind::ConfigError, key + " is required");
    const std::filesystem::path p(v);
    return p.is_absolute() ? p : base_dir / p;
  }

 private:
  boost::property_tree::ptree tree_;

  void validate_keys() const
  {
    static const std::map<std::string, std::set<std::string>> known = {
        {"general", {"seed", "out", "jobs", "calibration"}},
        {"angles",
         {"dims", "samples", "tol_monotone", "tol_concave", "boundary_gap", "variational_dims", "variational_pairs",
          "frames", "tol_frame", "tol_optimal", "continuity_samples"}},
        {"stability", {"ring", "alpha", "beta", "direction", "background", "cycles", "uniform_eps"}},
        {"solve", {"problem", "tol", "max_iter", "path_steps", "damping"}},
        {"mollify", {"chart", "radii", "tol", "dump_radius"}},
        {"calibrate", {"dims", "thetas", "terms_dims", "samples", "terms_samples", "safety"}},
    };
    for (const auto& [section, body] : tree_) {
      auto it = known.find(section);
      if (it == known.end()) fail(ErrorKind::ConfigError, "unknown section [" + section + "]");
      for (const auto& kv : body)
        if (!it->second.count(kv.first)) fail(ErrorKind::ConfigError, "unknown field " + section + "." + kv.first);
    }
  }
};

/// Rows of JSON scalars; written as an array of objects in the report and as CSV.
struct Table {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<nlohmann::json>> rows;

  nlohmann::json json() const
  {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : rows) {
      nlohmann::json o = nlohmann::json::object();
      for (std::size_t c = 0; c < columns.size(); ++c) o[columns[c]] = r[c];
      arr.push_back(o);
    }
    return arr;
  }

  std::string csv() const
  {
    std::string out;
    for (std::size_t c = 0; c < columns.size(); ++c) out += (c ? "," : "") + columns[c];
    out += "\n";
    for (const auto& r : rows) {
      for (std::size_t c = 0; c < r.size(); ++c) {
        if (c) out += ",";
        const auto& v = r[c];
        if (v.is_null()) continue;
        if (v.is_string()) {
          const std::string s = v.get<std::string>();
          out += s.find_first_of(",\"\n") == std::string::npos ? s : nlohmann::json(s).dump();
        } else if (v.is_number_float()) {
          out += detail::format_double(v.get<double>());
        } else {
          out += v.dump();
        }
      }
      out += "\n";
    }
    return out;
  }
};

struct Report {
  std::string command;
  nlohmann::json body = nlohmann::json::object();
  std::vector<Table> tables;
  std::vector<std::pair<std::string, std::string>> files;  // extra dumps: file name, contents

  nlohmann::json json() const
  {
    nlohmann::json j = {{"schema_version", kReportSchema}, {"command", command}};
    for (auto it = body.begin(); it != body.end(); ++it) j[it.key()] = it.value();
    for (const auto& t : tables) j["tables"][t.name] = t.json();
    return j;
  }
};

inline std::filesystem::path default_out_dir()
{
  if (const char* env = std::getenv(kOutEnv); env && *env) return env;
  return "dhym_out";
}

/// Writes <command>.json, <command>_<table>.csv and the extra dumps; returns the JSON text.
inline std::string write_report(const Report& r, const std::filesystem::path& dir)
{
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorKind::ConfigError, "cannot create output directory " + dir.string() + ": " + ec.message());
  auto put = [&](const std::string& name, const std::string& content) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) fail(ErrorKind::ConfigError, "cannot write " + (dir / name).string());
    out << content;
  };
  const std::string text = r.json().dump(2) + "\n";
  put(r.command + ".json", text);
  for (const auto& t : r.tables) put(r.command + "_" + t.name + ".csv", t.csv());
  for (const auto& [name, content] : r.files) put(name, content);
  return text;
}

// ---------------------------------------------------------------------------------------------
// angles

struct AngleSuiteOptions {
  std::vector<int> dims{2, 3, 4, 5};
  int samples = 10000;
  double tol_monotone = 1e-12;
  double tol_concave = 1e-9;
  double boundary_gap = 0.05;
  std::vector<int> variational_dims{2, 3, 4};
  int variational_pairs = 500;
  int frames = 2000;
  double tol_frame = 1e-9;
  double tol_optimal = 1e-10;
  std::uint64_t seed = 42;
  int jobs = 1;
};

/// Counts and worst excesses for one dimension. "worst" is the largest amount by which the
/// inequality was missed (negative when it always held).
struct SuiteTally {
  long checks = 0;
  long violations = 0;
  double worst = -std::numeric_limits<double>::infinity();

  void add(double excess, double tol)
  {
    ++checks;
    worst = std::max(worst, excess);
    if (excess > tol) ++violations;
  }

  nlohmann::json json() const { return {{"checks", checks}, {"violations", violations}, {"worst", worst}}; }
};

struct AngleShard {
  int n = 0;
  SuiteTally monotone, order, concave, frame, optimal;
  bool variational = false;
};

inline AngleShard monotone_shard(int n, const AngleSuiteOptions& o)
{
  AngleShard s;
  s.n = n;
  Rng rng = shard_rng(o.seed, 0x100u + n);
  for (int t = 0; t < o.samples; ++t) {
    // Adding a positive semidefinite form never raises either angle.
    const HermMatrix a = random_posdef(n, rng);
    const HermMatrix b = random_hermitian(n, rng, 2.0);
    const HermMatrix b2 = b + random_psd(n, rng, uniform(rng, 0.0, 2.0));
    const RealVector l1 = eigenvalues_rel(RelativePair(a, b));
    const RealVector l2 = eigenvalues_rel(RelativePair(a, b2));
    for (int k = 1; k <= n; ++k) {
      s.monotone.add(angle_Q(l2, k) - angle_Q(l1, k), o.tol_monotone);
      s.monotone.add(angle_P(l2, k) - angle_P(l1, k), o.tol_monotone);
    }
    for (int k = 1; k < n; ++k) {
      s.order.add(angle_Q(l1, k) - angle_Q(l1, k + 1), 0.0);
      s.order.add(angle_P(l1, k) - angle_P(l1, k + 1), 0.0);
    }

    // cot of the angles is concave along segments inside the cone.
    const HermMatrix c1 = form_with_spectrum(a, spectrum_with_angle_sum(n, uniform(rng, 0.05, kPi - o.boundary_gap), rng), rng);
    const HermMatrix c2 = form_with_spectrum(a, spectrum_with_angle_sum(n, uniform(rng, 0.05, kPi - o.boundary_gap), rng), rng);
    const double w = uniform(rng);
    const RealVector m1 = eigenvalues_rel(RelativePair(a, c1));
    const RealVector m2 = eigenvalues_rel(RelativePair(a, c2));
    const RealVector ms = eigenvalues_rel(RelativePair(a, w * c1 + (1 - w) * c2));
    for (int k = 1; k <= n; ++k) {
      const double rhs = w * cot(angle_Q(m1, k)) + (1 - w) * cot(angle_Q(m2, k));
      s.concave.add((rhs - cot(angle_Q(ms, k))) / (1.0 + std::abs(rhs)), o.tol_concave);
      if (k >= 2) {
        const double prhs = w * cot(angle_P(m1, k)) + (1 - w) * cot(angle_P(m2, k));
        s.concave.add((prhs - cot(angle_P(ms, k))) / (1.0 + std::abs(prhs)), o.tol_concave);
      }
    }
  }
  return s;
}

inline void variational_shard(AngleShard& s, const AngleSuiteOptions& o)
{
  const int n = s.n;
  s.variational = true;
  Rng rng = shard_rng(o.seed, 0x200u + n);
  for (int t = 0; t < o.variational_pairs; ++t) {
    // Reduce a general pair to the identity metric; the angles are congruence invariant.
    const HermMatrix metric = random_posdef(n, rng);
    const MetricReduction red(metric);
    const RelativePair pair = RelativePair::identity_metric(red.reduce(random_hermitian(n, rng, 2.0)));
    const std::uint64_t frame_seed = rng();
    for (int k = 1; k <= n; ++k) {
      const double q = angle_Q(pair, k);
      s.frame.add(variational_Q(pair, k, o.frames, frame_seed + k) - q, o.tol_frame);
      s.optimal.add(std::abs(variational_Q(pair, k, 1, frame_seed, {optimal_frame(pair.form(), k)}) - q), o.tol_optimal);
    }
  }
}

inline std::vector<AngleShard> angle_suites(const AngleSuiteOptions& o)
{
  struct Task {
    int n;
    bool variational;
  };
  std::vector<Task> tasks;
  for (int n : o.dims) tasks.push_back({n, false});
  for (int n : o.variational_dims) tasks.push_back({n, true});
  return dhym::detail::sharded(o.jobs, static_cast<int>(tasks.size()), [&](int i) {
    const Task& t = tasks[i];
    if (t.n < 1 || t.n > 8) fail(ErrorKind::ConfigError, "angles dimension must be in 1..8");
    if (!t.variational) return monotone_shard(t.n, o);
    AngleShard s;
    s.n = t.n;
    variational_shard(s, o);
    return s;
  });
}

/// Fresh hypotheses for the semi-continuity and uniform continuity statements at the grid points
/// of a calibration table, checked with the table's constants. `samples` valid hypotheses of
/// each kind are drawn, cycling over dimension, angle and functional.
struct ContinuityTally {
  SuiteTally semicontinuity;
  SuiteTally uniform;
  long rejected = 0;  // draws that failed a hypothesis and were redrawn
};

inline ContinuityTally continuity_suite(const CalibrationTable& table, int samples, std::uint64_t seed)
{
  struct Cell {
    AngleKind kind;
    int n;
    double theta;
  };
  std::vector<Cell> cells;
  for (const auto& e : table.entries()) {
    if (e.key == "c0_Q") cells.push_back({AngleKind::Q, e.n, e.theta});
    if (e.key == "c0_P") cells.push_back({AngleKind::P, e.n, e.theta});
  }
  if (cells.empty()) fail(ErrorKind::ConfigError, "calibration table has no c0 entries");
  auto key = [](const char* prefix, AngleKind kind) { return std::string(prefix) + std::string(to_string(kind)); };

  ContinuityTally out;
  Rng rng = shard_rng(seed, 0x300u);
  for (int i = 0; i < samples; ++i) {
    const Cell& cell = cells[i % cells.size()];
    const int n = cell.n;
    const double c0 = table.get(key("c0_", cell.kind), n, cell.theta);
    for (;;) {
      const HermMatrix metric = random_posdef(n, rng);
      const RealVector lambda =
          dhym::detail::boundary_spectrum(cell.kind, n, cell.theta * uniform(rng, 0.5, 1.0 - 1e-7), rng);
      const RelativePair pair(metric, form_with_spectrum(metric, lambda, rng));
      if (!(angle(cell.kind, eigenvalues_rel(pair), n) < cell.theta)) {
        ++out.rejected;
        continue;
      }
      const double eps = std::exp(uniform(rng, std::log(1e-6), std::log(cell.theta * (1.0 - 1e-9))));
      const MarginResult m = semicontinuity_margin(pair, cell.theta, eps, c0, cell.kind, 0.0);
      out.semicontinuity.add(m.lhs - m.bound, 0.0);
      break;
    }
  }
  for (int i = 0; i < samples; ++i) {
    const Cell& cell = cells[i % cells.size()];
    const double sigma0 = table.get(key("sigma0_", cell.kind), cell.n, cell.theta);
    for (;;) {
      const double sigma = sigma0 * uniform(rng, 1e-3, 1.0 - 1e-9);
      const auto h = sample_continuity_hypothesis(cell.kind, cell.n, cell.theta, sigma, rng);
      if (!h) {
        ++out.rejected;
        continue;
      }
      // Hypotheses and conclusion are congruence invariant; push everything through a random
      // positive g so chi3 is no longer the identity.
      const Eigen::MatrixXcd g = random_posdef(cell.n, rng, 0.3, 3.0);
      auto push = [&](const HermMatrix& a) { return HermMatrix(hermitian_part(g * a * g.adjoint())); };
      const RelativePair after(push(h->chi1), push(h->form) + sigma * push(h->chi3));
      out.uniform.add(angle(cell.kind, eigenvalues_rel(after), cell.n) - cell.theta, 0.0);
      break;
    }
  }
  return out;
}

inline AngleSuiteOptions angle_options(const Config& c)
{
  AngleSuiteOptions o;
  o.dims = c.integers("angles.dims", o.dims);
  o.samples = c.integer("angles.samples", o.samples);
  o.tol_monotone = c.positive("angles.tol_monotone", o.tol_monotone);
  o.tol_concave = c.positive("angles.tol_concave", o.tol_concave);
  o.boundary_gap = c.positive("angles.boundary_gap", o.boundary_gap);
  o.variational_dims = c.integers("angles.variational_dims", o.variational_dims);
  o.variational_pairs = c.integer("angles.variational_pairs", o.variational_pairs);
  o.frames = c.integer("angles.frames", o.frames);
  o.tol_frame = c.positive("angles.tol_frame", o.tol_frame);
  o.tol_optimal = c.positive("angles.tol_optimal", o.tol_optimal);
  if (o.samples < 0 || o.variational_pairs < 0 || o.frames < 1) fail(ErrorKind::ConfigError, "angles sample counts must be positive");
  o.seed = c.seed;
  o.jobs = c.jobs;
  return o;
}

inline Report run_angles(const Config& c)
{
  const AngleSuiteOptions o = angle_options(c);
  const auto shards = angle_suites(o);
  Report r;
  r.command = "angles";
  r.body["seed"] = o.seed;
  r.body["tolerances"] = {{"monotone", o.tol_monotone}, {"concave", o.tol_concave}, {"frame", o.tol_frame},
                          {"optimal", o.tol_optimal}, {"boundary_gap", o.boundary_gap}};
  Table t{"suites", {"n", "suite", "checks", "violations", "worst"}, {}};
  long failures = 0;
  auto row = [&](int n, const char* name, const SuiteTally& s) {
    t.rows.push_back({n, name, s.checks, s.violations, s.checks ? nlohmann::json(s.worst) : nlohmann::json(nullptr)});
    failures += s.violations;
  };
  for (const auto& s : shards) {
    if (s.variational) {
      row(s.n, "variational_frames", s.frame);
      row(s.n, "variational_optimal", s.optimal);
    } else {
      row(s.n, "monotonicity", s.monotone);
      row(s.n, "order", s.order);
      row(s.n, "concavity", s.concave);
    }
  }
  if (c.has("general.calibration")) {
    const CalibrationTable table = CalibrationTable::load(c.path("general.calibration").string());
    const int samples = c.integer("angles.continuity_samples", 1000);
    const ContinuityTally ct = continuity_suite(table, samples, o.seed);
    row(0, "semicontinuity", ct.semicontinuity);
    row(0, "uniform_continuity", ct.uniform);
    r.body["continuity_redraws"] = ct.rejected;
  }
  r.tables.push_back(std::move(t));
  r.body["violations"] = failures;
  r.body["pass"] = failures == 0;
  return r;
}

// ---------------------------------------------------------------------------------------------
// stability

inline ToyRing<Rational> ring_from_config(const Config& c)
{
  const std::string source = c.text("stability.ring", "");
  if (source.empty()) fail(ErrorKind::ConfigError, "stability.ring is required");
  if (source.starts_with("builtin:")) return builtin_ring<Rational>(source.substr(8));
  return load_ring<Rational>(c.path("stability.ring").string());
}

inline std::string rational_text(const Rational& q) { return q.str(); }

inline Report run_stability(const Config& c)
{
  using Class = ClassVector<Rational>;
  const ToyRing<Rational> ring = ring_from_config(c);
  auto cls = [&](const std::string& key, const std::string& fallback) {
    const std::string text = c.text(key, fallback);
    if (text.empty()) fail(ErrorKind::ConfigError, key + " is required");
    try {
      return parse_class(ring, text);
    } catch (const Error& e) {
      fail(ErrorKind::ConfigError, key + ": " + e.what());
    }
  };
  const Class alpha = cls("stability.alpha", "");
  const Class beta = cls("stability.beta", "");
  const Class direction = cls("stability.direction", "");
  const Class background = cls("stability.background", c.text("stability.beta", ""));

  std::vector<std::string> cycles;
  if (c.has("stability.cycles")) {
    cycles = c.strings("stability.cycles");
  } else {
    for (const auto& y : ring.cycles()) cycles.push_back(y.label);
  }

  const Phase<Rational> ph = theta0_from_classes(ring, alpha, beta);
  const TestFamilyClass<Rational> fam = make_family(ring, alpha, direction, background);

  Report r;
  r.command = "stability";
  r.body["ring"] = ring.name();
  r.body["dim"] = ring.dim();
  r.body["classes"] = {{"alpha", format_class(ring, alpha)},
                       {"beta", format_class(ring, beta)},
                       {"direction", format_class(ring, direction)},
                       {"background", format_class(ring, background)}};
  r.body["phase"] = {{"theta0", ph.theta0},
                     {"vartheta0", ph.vartheta0},
                     {"cot_theta0", rational_text(ph.cot_theta0)},
                     {"volume_re", rational_text(ph.volume.re)},
                     {"volume_im", rational_text(ph.volume.im)},
                     {"central_constraint", rational_text(central_constraint(ring, alpha, beta, ph))}};

  auto coeff_text = [](const std::vector<Rational>& cs) {
    std::string s;
    for (const auto& x : cs) s += (s.empty() ? "" : " ") + rational_text(x);
    return s;
  };
  auto verdict_table = [&](const std::string& name, const std::vector<CycleVerdict<Rational>>& vs) {
    Table t{name, {"cycle", "dim", "verdict", "witness", "coefficients", "signs", "value_at_zero"}, {}};
    for (const auto& v : vs)
      t.rows.push_back({v.cycle, v.dim, std::string(to_string(v.verdict)),
                        v.witness ? nlohmann::json(*v.witness) : nlohmann::json(nullptr), coeff_text(v.coeffs),
                        v.sign_pattern, rational_text(v.coeffs.back())});
    return t;
  };

  const auto verdicts = check_stable(ring, fam, ph, cycles);
  bool stable = true;
  for (const auto& v : verdicts) stable = stable && v.verdict == Verdict::Stable;
  r.body["stable"] = stable;
  r.tables.push_back(verdict_table("verdicts", verdicts));

  if (c.has("stability.uniform_eps")) {
    Rational eps;
    try {
      eps = Rational(c.text("stability.uniform_eps", ""));
    } catch (const std::exception&) {
      fail(ErrorKind::ConfigError, "stability.uniform_eps must be a rational number such as 1 or 3/2");
    }
    if (eps < 0) fail(ErrorKind::ConfigError, "stability.uniform_eps must be >= 0");
    const auto uni = check_uniform_stable(ring, fam, ph, eps, background, cycles);
    bool ok = true;
    for (const auto& v : uni) ok = ok && v.verdict == Verdict::Stable;
    r.body["uniform_eps"] = rational_text(eps);
    r.body["uniformly_stable"] = ok;
    r.tables.push_back(verdict_table("uniform", uni));
  }

  Table hyp{"hypotheses", {"cycle", "k", "value", "ok"}, {}};
  for (const auto& h : corollary_C_hypotheses(ring, alpha, beta, direction, ph, cycles))
    hyp.rows.push_back({h.cycle, h.k, rational_text(h.value), h.ok});
  r.tables.push_back(std::move(hyp));
  return r;
}

// ---------------------------------------------------------------------------------------------
// solve

struct ProblemFile {
  TorusProblem problem;
  TwistSpec twist;
  std::filesystem::path base_dir;
};

/// Torus problem text:
///   m 1 | grid 256 256 | chi <re im ...> | omega0 <re im ...> | theta0 x | Theta0 x
///   cone_margin x | twist_floor x
///   twist constant C | twist cosine | twist manufactured | twist grid PATH
///   mode cos|sin AMPLITUDE k_1 ... k_2m
/// Matrices are row-major real/imaginary pairs.
inline ProblemFile parse_problem(const std::string& text, const std::filesystem::path& base_dir = ".")
{
  ProblemFile pf;
  pf.base_dir = base_dir;
  TorusProblem& p = pf.problem;
  std::vector<double> chi, omega0;
  bool have_theta = false, have_Theta = false, have_twist = false;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  auto bad = [&](const std::string& msg) { fail(ErrorKind::ParseError, "problem line " + std::to_string(lineno) + ": " + msg); };
  while (std::getline(in, line)) {
    ++lineno;
    const auto w = detail::words(detail::strip_comment(line));
    if (w.empty()) continue;
    const std::string& key = w[0];
    auto num = [&](std::size_t i) {
      if (i >= w.size()) bad("missing value for " + key);
      try {
        return detail::to_number(w[i], key);
      } catch (const Error& e) {
        fail(ErrorKind::ParseError, "problem line " + std::to_string(lineno) + ": " + e.what());
      }
    };
    auto rest = [&](std::size_t from) {
      std::vector<double> v;
      for (std::size_t i = from; i < w.size(); ++i) v.push_back(num(i));
      return v;
    };
    if (key == "m") {
      p.m = static_cast<int>(num(1));
      if (p.m < 1 || p.m > 2) bad("m must be 1 or 2");
    } else if (key == "grid") {
      p.grid.clear();
      for (double v : rest(1)) {
        if (v < 2 || v != std::floor(v)) bad("grid sizes must be integers >= 2");
        p.grid.push_back(static_cast<int>(v));
      }
    } else if (key == "chi") {
      chi = rest(1);
    } else if (key == "omega0") {
      omega0 = rest(1);
    } else if (key == "theta0") {
      p.theta0 = num(1);
      have_theta = true;
    } else if (key == "Theta0") {
      p.Theta0 = num(1);
      have_Theta = true;
    } else if (key == "cone_margin") {
      p.cone_margin = num(1);
    } else if (key == "twist_floor") {
      p.twist_floor = num(1);
    } else if (key == "twist") {
      if (w.size() < 2) bad("twist needs a kind");
      have_twist = true;
      if (w[1] == "constant") {
        pf.twist.kind = TwistSpec::Kind::Constant;
        pf.twist.constant = num(2);
      } else if (w[1] == "cosine") {
        pf.twist.kind = TwistSpec::Kind::Cosine;
      } else if (w[1] == "manufactured") {
        pf.twist.kind = TwistSpec::Kind::Manufactured;
      } else if (w[1] == "grid") {
        if (w.size() < 3) bad("twist grid needs a path");
        pf.twist.kind = TwistSpec::Kind::Grid;
        pf.twist.grid_path = w[2];
      } else {
        bad("unknown twist kind '" + w[1] + "'");
      }
    } else if (key == "mode") {
      if (w.size() < 3 || (w[1] != "cos" && w[1] != "sin")) bad("mode needs cos|sin, amplitude and wavenumbers");
      Mode md;
      md.sine = w[1] == "sin";
      md.amplitude = num(2);
      for (double k : rest(3)) {
        if (k != std::floor(k)) bad("mode wavenumbers must be integers");
        md.k.push_back(static_cast<int>(k));
      }
      pf.twist.modes.push_back(std::move(md));
    } else {
      bad("unknown key '" + key + "'");
    }
  }
  lineno = 0;
  const int m = p.m;
  if (static_cast<int>(p.grid.size()) != 2 * m) bad("grid needs " + std::to_string(2 * m) + " sizes");
  auto matrix = [&](const std::vector<double>& v, const std::string& name) {
    if (static_cast<int>(v.size()) != 2 * m * m) bad(name + " needs " + std::to_string(2 * m * m) + " numbers");
    HermMatrix a(m, m);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) a(i, j) = cplx(v[2 * (i * m + j)], v[2 * (i * m + j) + 1]);
    if (!is_hermitian(a, 1e-12)) bad(name + " is not Hermitian");
    return a;
  };
  p.chi = matrix(chi, "chi");
  p.omega0 = matrix(omega0, "omega0");
  if (!have_theta) bad("theta0 is required");
  if (!have_Theta) p.Theta0 = p.theta0;
  if (!have_twist) bad("twist is required");
  for (const auto& md : pf.twist.modes)
    if (static_cast<int>(md.k.size()) != 2 * m) bad("each mode needs " + std::to_string(2 * m) + " wavenumbers");
  return pf;
}

inline ProblemFile load_problem(const std::filesystem::path& file)
{
  std::ifstream in(file);
  if (!in) fail(ErrorKind::ConfigError, "cannot open problem file " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_problem(ss.str(), file.parent_path().empty() ? "." : file.parent_path());
}

inline RealField load_grid_dump(const std::filesystem::path& file)
{
  std::ifstream in(file);
  if (!in) fail(ErrorKind::ConfigError, "cannot open twist dump " + file.string());
  RealField out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = detail::strip_comment(line);
    if (line.empty()) continue;
    try {
      out.push_back(detail::to_number(line, "value"));
    } catch (const Error& e) {
      fail(ErrorKind::ParseError, file.string() + " line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

inline Report run_solve(const Config& c)
{
  ProblemFile pf = load_problem(c.path("solve.problem"));
  TorusProblem& prob = pf.problem;
  const TorusGrid grid(prob.m, prob.grid);
  materialize_twist(grid, prob, pf.twist, [&](const std::string& rel) {
    const std::filesystem::path p(rel);
    return load_grid_dump(p.is_absolute() ? p : pf.base_dir / p);
  });
  check_twist_sign(prob.f, prob.m, prob.twist_floor);

  NewtonOptions opt;
  opt.tol = c.positive("solve.tol", opt.tol);
  opt.max_iter = c.integer("solve.max_iter", opt.max_iter);
  opt.damping = c.positive("solve.damping", opt.damping);
  const int steps = c.integer("solve.path_steps", 0);
  if (opt.max_iter < 1) fail(ErrorKind::ConfigError, "solve.max_iter must be >= 1");

  RealField phi;
  NewtonReport rep;
  Report r;
  r.command = "solve";
  if (steps > 0) {
    auto [x, path] = continuity_path(grid, prob, steps, opt);
    phi = std::move(x);
    rep = path.final_solve;
    Table t{"path", {"s", "iterations", "residual_sup", "margin_P", "margin_Q"}, {}};
    for (const auto& st : path.steps) t.rows.push_back({st.s, st.iterations, st.residual_sup, st.margin_P, st.margin_Q});
    r.tables.push_back(std::move(t));
  } else {
    auto [x, nr] = newton_solve(grid, prob, RealField(grid.size(), 0.0), opt);
    phi = std::move(x);
    rep = std::move(nr);
  }

  r.body["problem"] = {{"m", prob.m},           {"grid", prob.grid},          {"theta0", prob.theta0},
                       {"Theta0", prob.Theta0}, {"cone_margin", prob.cone_margin}};
  nlohmann::json sol = to_json(rep);
  sol.erase("iterates");
  r.body["solution"] = sol;
  r.body["tolerance"] = opt.tol;

  Table hist{"residuals",
             {"iteration", "residual_sup", "residual_l2", "step", "halvings", "margin_P", "margin_Q", "compatibility_gap",
              "gmres_iterations", "unresolved_sup", "error_sup"},
             {}};
  for (const auto& it : rep.iterates)
    hist.rows.push_back({it.iteration, it.residual_sup, it.residual_l2, it.step, it.halvings, it.margin_P, it.margin_Q,
                         it.compatibility_gap, it.gmres_iterations, it.unresolved_sup,
                         it.error_sup ? nlohmann::json(*it.error_sup) : nlohmann::json(nullptr)});
  r.tables.push_back(std::move(hist));

  std::string dump = "index,phi\n";
  for (std::size_t p = 0; p < phi.size(); ++p) dump += std::to_string(p) + "," + detail::format_double(phi[p]) + "\n";
  r.files.emplace_back("solve_phi.csv", std::move(dump));
  return r;
}

// ---------------------------------------------------------------------------------------------
// mollify

struct ChartFile {
  std::string name;
  int m = 1;
  double R = 1.0;
  double h = 1.0 / 64;
  std::vector<PotentialTerm> terms;
  std::vector<std::vector<double>> queries;
};

/// Chart text:
///   chart NAME | m 1 | R 1.0 | h 0.015625
///   term constant|quadratic|linear|logpole|log1p COEFF [x_1 ... x_2m]
///   query x_1 ... x_2m          (defaults to the origin)
inline ChartFile parse_chart(const std::string& text)
{
  ChartFile cf;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  auto bad = [&](const std::string& msg) { fail(ErrorKind::ParseError, "chart line " + std::to_string(lineno) + ": " + msg); };
  while (std::getline(in, line)) {
    ++lineno;
    const auto w = detail::words(detail::strip_comment(line));
    if (w.empty()) continue;
    auto num = [&](std::size_t i) {
      if (i >= w.size()) bad("missing value for " + w[0]);
      try {
        return detail::to_number(w[i], w[0]);
      } catch (const Error& e) {
        fail(ErrorKind::ParseError, "chart line " + std::to_string(lineno) + ": " + e.what());
      }
    };
    auto rest = [&](std::size_t from) {
      std::vector<double> v;
      for (std::size_t i = from; i < w.size(); ++i) v.push_back(num(i));
      return v;
    };
    if (w[0] == "chart") {
      if (w.size() < 2) bad("chart needs a name");
      cf.name = w[1];
    } else if (w[0] == "m") {
      cf.m = static_cast<int>(num(1));
    } else if (w[0] == "R") {
      cf.R = num(1);
    } else if (w[0] == "h") {
      cf.h = num(1);
    } else if (w[0] == "term") {
      static const std::map<std::string, PotentialTerm::Kind> kinds = {
          {"constant", PotentialTerm::Kind::Constant}, {"quadratic", PotentialTerm::Kind::Quadratic},
          {"linear", PotentialTerm::Kind::Linear},     {"logpole", PotentialTerm::Kind::LogPole},
          {"log1p", PotentialTerm::Kind::LogOnePlus}};
      if (w.size() < 3) bad("term needs a kind and a coefficient");
      auto it = kinds.find(w[1]);
      if (it == kinds.end()) bad("unknown term kind '" + w[1] + "'");
      cf.terms.push_back({it->second, num(2), rest(3)});
    } else if (w[0] == "query") {
      cf.queries.push_back(rest(1));
    } else {
      bad("unknown key '" + w[0] + "'");
    }
  }
  lineno = 0;
  if (cf.m < 1 || cf.m > 3) bad("m must be 1..3");
  if (cf.terms.empty()) bad("chart has no potential terms");
  for (const auto& t : cf.terms) {
    const bool needs_point = t.kind == PotentialTerm::Kind::Linear;
    if ((needs_point || !t.point.empty()) && static_cast<int>(t.point.size()) != 2 * cf.m)
      bad("term points need " + std::to_string(2 * cf.m) + " coordinates");
  }
  for (const auto& q : cf.queries)
    if (static_cast<int>(q.size()) != 2 * cf.m) bad("query points need " + std::to_string(2 * cf.m) + " coordinates");
  if (cf.queries.empty()) cf.queries.push_back(std::vector<double>(2 * cf.m, 0.0));
  return cf;
}

inline ChartFile load_chart(const std::filesystem::path& file)
{
  std::ifstream in(file);
  if (!in) fail(ErrorKind::ConfigError, "cannot open chart file " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_chart(ss.str());
}

inline Report run_mollify(const Config& c)
{
  const ChartFile cf = load_chart(c.path("mollify.chart"));
  auto grid = std::make_shared<ChartGrid>(cf.m, cf.R, cf.h);
  const ChartPotential T = ChartPotential::from_terms(grid, cf.terms);
  const MollifierKernel kernel(cf.m);
  const std::vector<double> radii = c.numbers("mollify.radii", {cf.R / 8, cf.R / 4, 3 * cf.R / 8});
  const double tol = c.positive("mollify.tol", 1e-9);
  for (double r : radii)
    if (!(r > 0.0)) fail(ErrorKind::ConfigError, "mollify.radii must be positive");

  Report r;
  r.command = "mollify";
  r.body["chart"] = cf.name;
  r.body["m"] = cf.m;
  r.body["R"] = cf.R;
  r.body["h"] = cf.h;
  r.body["psh_declared"] = T.psh_declared();
  r.body["eta"] = eta_constant(cf.m, kernel);
  Table t{"comparison",
          {"point", "r", "gap_half", "gap_moll", "nu", "half_bound", "moll_bound", "half_slack", "moll_slack", "asserted",
           "half_holds", "moll_holds"},
          {}};
  bool all = true;
  for (const auto& q : cf.queries) {
    const Offset z = grid->nearest(q);
    std::string where;
    for (double v : grid->coordinates(z)) where += (where.empty() ? "" : " ") + detail::format_double(v);
    for (double rad : radii) {
      const ComparisonResult cr = comparison_check(T, kernel, z, rad, tol);
      all = all && cr.half_holds && cr.moll_holds;
      t.rows.push_back({where, rad, cr.gap_half, cr.gap_moll, cr.nu, std::log(2.0) * cr.nu, cr.eta * cr.nu, cr.half_slack,
                        cr.moll_slack, cr.asserted, cr.half_holds, cr.moll_holds});
    }
  }
  r.tables.push_back(std::move(t));
  r.body["bounds_hold"] = all;

  if (c.has("mollify.dump_radius")) {
    const double rad = c.positive("mollify.dump_radius", 1.0);
    const ChartField f = mollify(T, kernel, rad);
    std::string dump = "index,value\n";
    for (std::size_t i = 0; i < f.points.size(); ++i) {
      std::string idx;
      for (int v : f.points[i]) idx += (idx.empty() ? "" : " ") + std::to_string(v);
      dump += idx + "," + detail::format_double(f.values[i]) + "\n";
    }
    r.files.emplace_back("mollify_field.csv", std::move(dump));
  }
  return r;
}

// ---------------------------------------------------------------------------------------------
// calibrate

inline Report run_calibrate(const Config& c)
{
  CalibrationOptions o;
  o.dims = c.integers("calibrate.dims", o.dims);
  o.thetas = c.numbers("calibrate.thetas", o.thetas);
  o.terms_dims = c.integers("calibrate.terms_dims", o.terms_dims);
  o.samples = c.integer("calibrate.samples", o.samples);
  o.terms_samples = c.integer("calibrate.terms_samples", o.terms_samples);
  o.safety = c.positive("calibrate.safety", o.safety);
  o.seed = c.seed;
  o.jobs = c.jobs;
  if (o.samples < 1 || o.terms_samples < 1) fail(ErrorKind::ConfigError, "calibrate sample counts must be >= 1");
  for (double th : o.thetas)
    if (!(th > 0.0 && th < kPi)) fail(ErrorKind::ConfigError, "calibrate.thetas must lie in (0, pi)");
  const CalibrationTable table = run_calibration(o);

  Report r;
  r.command = "calibrate";
  r.body["seed"] = o.seed;
  r.body["samples"] = o.samples;
  r.body["safety"] = o.safety;
  Table t{"entries", {"key", "n", "theta", "value", "observed", "analytic"}, {}};
  for (const auto& e : table.entries())
    t.rows.push_back({e.key, e.n, e.theta, e.value, e.observed, e.analytic ? nlohmann::json(*e.analytic) : nlohmann::json(nullptr)});
  r.tables.push_back(std::move(t));
  r.files.emplace_back("calibration.json", table.to_json().dump(2) + "\n");
  return r;
}

inline const std::vector<std::string>& command_names()
{
  static const std::vector<std::string> names{"angles", "stability", "solve", "mollify", "calibrate"};
  return names;
}

inline Report run_command(const std::string& name, const Config& c)
{
  if (name == "angles") return run_angles(c);
  if (name == "stability") return run_stability(c);
  if (name == "solve") return run_solve(c);
  if (name == "mollify") return run_mollify(c);
  if (name == "calibrate") return run_calibrate(c);
  fail(ErrorKind::ConfigError, "unknown command " + name);
}

/// Runs one command, writes its files and prints the JSON on `out`; prose and timing go to
/// `err`. Returns the exit code.
inline int execute(const std::string& name, const Config& c, std::ostream& out, std::ostream& err)
{
  const auto start = std::chrono::steady_clock::now();
  try {
    const Report r = run_command(name, c);
    const auto dir = c.out_dir.empty() ? default_out_dir() : c.out_dir;
    out << write_report(r, dir);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    err << name << ": wrote " << (dir / (name + ".json")).string() << " in " << secs << " s\n";
    return kExitOk;
  } catch (const Error& e) {
    err << name << ": " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    err << name << ": internal error: " << e.what() << "\n";
    return kExitInternal;
  }
}

}  // namespace dhym::harness

#endif  // DHYM_HARNESS_HPP
