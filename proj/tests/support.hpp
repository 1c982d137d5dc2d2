#pragma once

// Test-only helpers: random trees and number tables, and oracle evaluators
// that share no arithmetic or parsing code with the library.

#include <cctype>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <gmpxx.h>

#include "genrank/expr.hpp"
#include "genrank/rng.hpp"

namespace testsupport {

using genrank::Expr;
using genrank::Op;
using genrank::Rng;

inline mpq_class to_mpq(const genrank::Rational& r) {
  mpq_class q(numerator(r).str() + "/" + denominator(r).str());
  q.canonicalize();
  return q;
}

inline genrank::Rational from_mpq(const mpq_class& q) {
  return genrank::Rational(boost::multiprecision::cpp_int(q.get_num().get_str()),
                           boost::multiprecision::cpp_int(q.get_den().get_str()));
}

/// Random table entries: small integers (zero included), halves and tenths.
inline std::vector<mpq_class> random_table(Rng& rng, std::size_t n) {
  std::vector<mpq_class> out;
  for (std::size_t i = 0; i < n; ++i) {
    const long num = static_cast<long>(genrank::uniform_index(rng, 41)) - 10;
    const long den = std::vector<long>{1, 1, 2, 10}[genrank::uniform_index(rng, 4)];
    mpq_class q(num, den);
    q.canonicalize();
    out.push_back(q);
  }
  return out;
}

inline genrank::NumberTable library_table(const std::vector<mpq_class>& t) {
  genrank::NumberTable out;
  for (const auto& q : t) out.push_back(from_mpq(q));
  return out;
}

/// Tree of depth <= max_depth (a leaf has depth 1) over NUM0..NUM{n-1};
/// about one leaf in ten is a decimal constant.
inline Expr random_tree(Rng& rng, int max_depth, std::size_t num_count) {
  const bool leaf = max_depth <= 1 || genrank::uniform_unit(rng) < 0.3;
  if (leaf) {
    if (genrank::uniform_unit(rng) < 0.1) {
      static const char* kConstants[] = {"0", "1", "2", "0.5", "3.25", "100"};
      return Expr::constant(genrank::parse_rational(kConstants[genrank::uniform_index(rng, 6)]));
    }
    return Expr::num(static_cast<int>(genrank::uniform_index(rng, num_count)));
  }
  const Op op = genrank::kAllOps[genrank::uniform_index(rng, 4)];
  Expr l = random_tree(rng, max_depth - 1, num_count);
  Expr r = random_tree(rng, max_depth - 1, num_count);
  return Expr::binary(op, std::move(l), std::move(r));
}

/// Tree with at least one operator.
inline Expr random_compound_tree(Rng& rng, int max_depth, std::size_t num_count) {
  for (;;) {
    Expr t = random_tree(rng, max_depth, num_count);
    if (!t.is_leaf()) return t;
  }
}

/// Structural walk with GMP arithmetic. nullopt is Undefined.
inline std::optional<mpq_class> oracle_eval_tree(const Expr& e, const std::vector<mpq_class>& table) {
  if (e.is_leaf()) {
    const auto& operand = e.operand();
    if (const auto* ref = std::get_if<genrank::NumRef>(&operand)) return table.at(static_cast<std::size_t>(ref->index));
    return to_mpq(std::get<genrank::Rational>(operand));
  }
  auto a = oracle_eval_tree(e.left(), table);
  auto b = oracle_eval_tree(e.right(), table);
  if (!a || !b) return std::nullopt;
  switch (e.op()) {
    case Op::Add: return mpq_class(*a + *b);
    case Op::Sub: return mpq_class(*a - *b);
    case Op::Mul: return mpq_class(*a * *b);
    case Op::Div:
      if (*b == 0) return std::nullopt;
      return mpq_class(*a / *b);
  }
  return std::nullopt;
}

/// Recursive-descent evaluator over the wire format, written independently of
/// the library parser. Throws std::runtime_error on malformed text.
class OracleParser {
 public:
  OracleParser(const std::string& text, const std::vector<mpq_class>& table) : table_(table) {
    std::istringstream s(text);
    std::string t;
    while (s >> t) toks_.push_back(t);
  }

  std::optional<mpq_class> run() {
    auto v = sum();
    if (pos_ != toks_.size()) throw std::runtime_error("trailing tokens");
    return v;
  }

 private:
  using V = std::optional<mpq_class>;
  const std::string* peek() const { return pos_ < toks_.size() ? &toks_[pos_] : nullptr; }

  V sum() {
    V v = product();
    while (peek() && (*peek() == "+" || *peek() == "-")) {
      const bool add = toks_[pos_++] == "+";
      V r = product();
      v = (v && r) ? V(add ? mpq_class(*v + *r) : mpq_class(*v - *r)) : std::nullopt;
    }
    return v;
  }

  V product() {
    V v = atom();
    while (peek() && (*peek() == "*" || *peek() == "/")) {
      const bool mul = toks_[pos_++] == "*";
      V r = atom();
      if (!v || !r || (!mul && *r == 0)) {
        v = std::nullopt;
      } else {
        v = mul ? mpq_class(*v * *r) : mpq_class(*v / *r);
      }
    }
    return v;
  }

  V atom() {
    if (!peek()) throw std::runtime_error("unexpected end");
    const std::string t = toks_[pos_++];
    if (t == "(") {
      V v = sum();
      if (!peek() || *peek() != ")") throw std::runtime_error("missing )");
      ++pos_;
      return v;
    }
    if (t.rfind("NUM", 0) == 0) return table_.at(std::stoul(t.substr(3)));
    // Decimal literal: digits with an optional fraction.
    const auto dot = t.find('.');
    std::string digits = t;
    std::size_t scale = 0;
    if (dot != std::string::npos) {
      digits = t.substr(0, dot) + t.substr(dot + 1);
      scale = t.size() - dot - 1;
    }
    for (char c : digits) {
      if (!std::isdigit(static_cast<unsigned char>(c))) throw std::runtime_error("bad token " + t);
    }
    mpq_class q(mpz_class(digits), mpz_class("1" + std::string(scale, '0')));
    q.canonicalize();
    return q;
  }

  std::vector<std::string> toks_;
  std::size_t pos_ = 0;
  const std::vector<mpq_class>& table_;
};

inline std::optional<mpq_class> oracle_eval_text(const std::string& text, const std::vector<mpq_class>& table) {
  return OracleParser(text, table).run();
}

/// Library value and oracle value agree (Undefined on both sides counts).
inline bool same_value(const genrank::ExprValue& v, const std::optional<mpq_class>& o) {
  if (!v.defined() || !o) return v.defined() == o.has_value();
  return to_mpq(v.value()) == *o;
}

/// Oracle labeling: positive iff both defined and equal.
inline bool oracle_positive(const std::optional<mpq_class>& candidate, const std::optional<mpq_class>& truth) {
  return candidate && truth && *candidate == *truth;
}

}  // namespace testsupport
