#ifndef DHYM_RING_IO_HPP
#define DHYM_RING_IO_HPP

// Ring definition files and the built-in corpus.
//
//   # comment
//   ring CP2_blowup_1
//   dim 2
//   basis H E1
//   X H H = 1            top intersection entries (indices by basis label, any order)
//   X E1 E1 = -1
//   cycle L 1            a cycle: label and dimension
//   L H = 1              its evaluation entries
//
// Unlisted entries are zero. Values are integers or fractions p/q.

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "dhym/error.hpp"
#include "dhym/intersection_ring.hpp"

namespace dhym {

namespace detail {

inline std::vector<std::string> split_ws(const std::string& line)
{
  std::istringstream is(line);
  std::vector<std::string> out;
  for (std::string tok; is >> tok;) out.push_back(tok);
  return out;
}

[[noreturn]] inline void parse_fail(int line, const std::string& msg)
{
  fail(ErrorKind::ParseError, "line " + std::to_string(line) + ": " + msg);
}

}  // namespace detail

template <class Scalar = Rational>
ToyRing<Scalar> parse_ring(std::istream& in)
{
  std::string name = "ring";
  int n = 0;
  std::vector<std::string> basis;
  std::optional<ToyRing<Scalar>> ring;
  auto ensure = [&](int line) -> ToyRing<Scalar>& {
    if (!ring) {
      if (n < 1) detail::parse_fail(line, "dim must precede tensor entries");
      if (basis.empty()) detail::parse_fail(line, "basis must precede tensor entries");
      ring.emplace(name, n, basis);
    }
    return *ring;
  };

  std::string raw;
  for (int lineno = 1; std::getline(in, raw); ++lineno) {
    if (const auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
    const auto tok = detail::split_ws(raw);
    if (tok.empty()) continue;
    const std::string& key = tok[0];
    if (key == "ring") {
      if (tok.size() != 2) detail::parse_fail(lineno, "expected: ring NAME");
      if (ring) detail::parse_fail(lineno, "ring name after entries");
      name = tok[1];
    } else if (key == "dim") {
      if (tok.size() != 2) detail::parse_fail(lineno, "expected: dim N");
      if (ring) detail::parse_fail(lineno, "dim after entries");
      try {
        n = std::stoi(tok[1]);
      } catch (const std::exception&) {
        detail::parse_fail(lineno, "bad dimension '" + tok[1] + "'");
      }
      if (n < 1) detail::parse_fail(lineno, "dimension must be >= 1");
    } else if (key == "basis") {
      if (ring) detail::parse_fail(lineno, "basis after entries");
      basis.assign(tok.begin() + 1, tok.end());
      if (basis.empty()) detail::parse_fail(lineno, "empty basis");
      for (std::size_t i = 0; i < basis.size(); ++i)
        for (std::size_t j = 0; j < i; ++j)
          if (basis[i] == basis[j]) detail::parse_fail(lineno, "duplicate basis label " + basis[i]);
    } else if (key == "cycle") {
      if (tok.size() != 3) detail::parse_fail(lineno, "expected: cycle LABEL DIM");
      auto& r = ensure(lineno);
      int d = 0;
      try {
        d = std::stoi(tok[2]);
      } catch (const std::exception&) {
        detail::parse_fail(lineno, "bad cycle dimension '" + tok[2] + "'");
      }
      try {
        r.add_cycle(tok[1], d);
      } catch (const Error& e) {
        detail::parse_fail(lineno, e.what());
      }
    } else {
      auto& r = ensure(lineno);
      const auto* cyc = r.find_cycle(key);
      if (!cyc) detail::parse_fail(lineno, "unknown keyword or cycle '" + key + "'");
      const auto eq = std::find(tok.begin(), tok.end(), std::string("="));
      std::string tuple = "(";
      for (auto it = tok.begin() + 1; it != eq; ++it) tuple += (it == tok.begin() + 1 ? "" : ",") + *it;
      tuple += ")";
      if (eq == tok.end() || eq + 2 != tok.end())
        detail::parse_fail(lineno, "malformed entry " + key + tuple + ": expected '<labels> = <value>'");
      std::vector<int> idx;
      for (auto it = tok.begin() + 1; it != eq; ++it) {
        const int i = r.basis_index(*it);
        if (i < 0) detail::parse_fail(lineno, "entry " + key + tuple + " uses unknown class '" + *it + "'");
        idx.push_back(i);
      }
      if (static_cast<int>(idx.size()) != cyc->dim)
        detail::parse_fail(lineno, "entry " + key + tuple + " has " + std::to_string(idx.size()) + " indices, expected " +
                                       std::to_string(cyc->dim));
      Scalar value = 0;
      try {
        if constexpr (std::is_floating_point_v<Scalar>) {
          value = std::stod(*(eq + 1));
        } else {
          value = Scalar((eq + 1)->c_str());
        }
      } catch (const std::exception&) {
        detail::parse_fail(lineno, "entry " + key + tuple + " has bad value '" + *(eq + 1) + "'");
      }
      r.set_entry(key, idx, value);
    }
  }
  if (!ring) ensure(0);
  return *ring;
}

template <class Scalar = Rational>
ToyRing<Scalar> load_ring(const std::string& path)
{
  std::ifstream in(path);
  if (!in) fail(ErrorKind::ConfigError, "cannot open ring file " + path);
  try {
    return parse_ring<Scalar>(in);
  } catch (const Error& e) {
    fail(e.kind(), path + ": " + e.what());
  }
}

template <class Scalar = Rational>
ToyRing<Scalar> parse_ring_text(const std::string& text)
{
  std::istringstream in(text);
  return parse_ring<Scalar>(in);
}

template <class Scalar>
void write_ring(std::ostream& out, const ToyRing<Scalar>& ring)
{
  out << "ring " << ring.name() << "\n" << "dim " << ring.dim() << "\nbasis";
  for (const auto& b : ring.basis()) out << " " << b;
  out << "\n";
  for (const auto& c : ring.cycles()) {
    if (c.label != "X") out << "cycle " << c.label << " " << c.dim << "\n";
    for (const auto& [idx, v] : c.eval) {
      out << c.label;
      for (int i : idx) out << " " << ring.basis()[i];
      out << " = " << v << "\n";
    }
  }
}

/// CP^n with hyperplane H and linear subspaces L1..L{n-1}.
template <class Scalar = Rational>
ToyRing<Scalar> projective_space(int n)
{
  if (n < 1 || n > 3) fail(ErrorKind::ParseError, "built-in projective spaces cover n <= 3");
  ToyRing<Scalar> r("CP" + std::to_string(n), n, {"H"});
  r.set_entry("X", std::vector<int>(n, 0), Scalar(1));
  for (int m = 1; m < n; ++m) {
    const std::string label = "L" + std::to_string(m);
    r.add_cycle(label, m);
    r.set_entry(label, std::vector<int>(m, 0), Scalar(1));
  }
  return r;
}

/// CP^2 blown up at k <= 3 points: H^2 = 1, E_i^2 = -1, H.E_i = 0, with curves L (a general
/// line) and the exceptional curves E_i.
template <class Scalar = Rational>
ToyRing<Scalar> blowup_cp2(int k)
{
  if (k < 0 || k > 3) fail(ErrorKind::ParseError, "built-in blowups cover k <= 3 points");
  std::vector<std::string> basis{"H"};
  for (int i = 1; i <= k; ++i) basis.push_back("E" + std::to_string(i));
  ToyRing<Scalar> r("CP2_blowup_" + std::to_string(k), 2, basis);
  r.set_entry("X", {0, 0}, Scalar(1));
  for (int i = 1; i <= k; ++i) r.set_entry("X", {i, i}, Scalar(-1));
  r.add_cycle("L", 1);
  r.set_entry("L", {0}, Scalar(1));
  for (int i = 1; i <= k; ++i) {
    const std::string label = "C" + std::to_string(i);
    r.add_cycle(label, 1);
    r.set_entry(label, {i}, Scalar(-1));
  }
  return r;
}

/// Product of curves C1 x ... x Cn (n = 2 or 3), basis f_i = pullback of a point class of
/// the i-th factor: f_1 ... f_n = 1 and every square vanishes. Cycles are the coordinate
/// sub-products: for a subset S of factors, Y_S = prod_{i in S} C_i x points, with
/// (prod_{i in S} f_i) . Y_S = 1.
template <class Scalar = Rational>
ToyRing<Scalar> product_of_curves(int n)
{
  if (n < 2 || n > 3) fail(ErrorKind::ParseError, "built-in products cover 2 or 3 curves");
  std::vector<std::string> basis;
  for (int i = 1; i <= n; ++i) basis.push_back("f" + std::to_string(i));
  ToyRing<Scalar> r(n == 2 ? "torus2" : "E1xE2xE3", n, basis);
  std::vector<int> all;
  for (int i = 0; i < n; ++i) all.push_back(i);
  r.set_entry("X", all, Scalar(1));
  for (unsigned mask = 1; mask + 1 < (1u << n); ++mask) {
    std::vector<int> idx;
    std::string label = "Y";
    for (int i = 0; i < n; ++i)
      if (mask & (1u << i)) {
        idx.push_back(i);
        label += std::to_string(i + 1);
      }
    r.add_cycle(label, static_cast<int>(idx.size()));
    r.set_entry(label, idx, Scalar(1));
  }
  return r;
}

template <class Scalar = Rational>
ToyRing<Scalar> builtin_ring(const std::string& name)
{
  if (name == "CP1") return projective_space<Scalar>(1);
  if (name == "CP2") return projective_space<Scalar>(2);
  if (name == "CP3") return projective_space<Scalar>(3);
  for (int k = 0; k <= 3; ++k)
    if (name == "CP2_blowup_" + std::to_string(k)) return blowup_cp2<Scalar>(k);
  if (name == "torus2") return product_of_curves<Scalar>(2);
  if (name == "E1xE2xE3") return product_of_curves<Scalar>(3);
  fail(ErrorKind::ConfigError, "unknown built-in ring " + name);
}

inline std::vector<std::string> builtin_ring_names()
{
  return {"CP1", "CP2", "CP3", "CP2_blowup_0", "CP2_blowup_1", "CP2_blowup_2", "CP2_blowup_3", "torus2", "E1xE2xE3"};
}

}  // namespace dhym

#endif  // DHYM_RING_IO_HPP
