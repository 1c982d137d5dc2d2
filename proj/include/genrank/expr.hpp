#pragma once

// Solution expressions: number mapping, infix parsing/printing and exact
// evaluation over rationals.

#include <array>
#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

namespace genrank {

using Rational = boost::multiprecision::cpp_rational;

/// Parses "12", "3.14" or "7/3" into an exact rational. Throws ParseError.
Rational parse_rational(std::string_view text);

/// Exact decimal rendering when the denominator has only factors 2 and 5.
std::optional<std::string> to_decimal_string(const Rational& value);

/// Decimal when exact, otherwise "p/q".
std::string to_exact_string(const Rational& value);

enum class Op : char { Add = '+', Sub = '-', Mul = '*', Div = '/' };

inline constexpr std::array<Op, 4> kAllOps{Op::Add, Op::Sub, Op::Mul, Op::Div};

inline constexpr char op_symbol(Op op) { return static_cast<char>(op); }
inline constexpr int op_precedence(Op op) { return (op == Op::Add || op == Op::Sub) ? 1 : 2; }
inline constexpr bool op_commutative(Op op) { return op == Op::Add || op == Op::Mul; }
std::optional<Op> op_from_token(std::string_view token);

/// Reference to the i-th number of a problem (token "NUMi").
struct NumRef {
  int index = 0;
  friend bool operator==(const NumRef&, const NumRef&) = default;
};

using Operand = std::variant<NumRef, Rational>;

std::string num_token(int index);
/// "NUM7" -> 7; nullopt for anything else.
std::optional<int> parse_num_token(std::string_view token);

/// Immutable binary expression tree. Copies share structure.
class Expr {
 public:
  static Expr num(int index);
  /// Constants must be non-negative terminating decimals so that they print
  /// and re-parse exactly.
  static Expr constant(Rational value);
  static Expr leaf(Operand operand);
  static Expr binary(Op op, Expr left, Expr right);

  bool is_leaf() const;
  Op op() const;
  const Expr& left() const;
  const Expr& right() const;
  const Operand& operand() const;

  std::size_t leaf_count() const;
  std::size_t op_count() const;
  std::size_t node_count() const { return leaf_count() + op_count(); }
  std::size_t depth() const;

  friend bool operator==(const Expr& a, const Expr& b);

 private:
  struct Node;
  explicit Expr(std::shared_ptr<const Node> node) : node_(std::move(node)) {}
  std::shared_ptr<const Node> node_;
};

/// Exact value of an expression, or Undefined after a division by zero.
class ExprValue {
 public:
  static ExprValue undefined() { return ExprValue(); }
  static ExprValue of(Rational v) {
    ExprValue e;
    e.value_ = std::move(v);
    return e;
  }
  bool defined() const { return value_.has_value(); }
  const Rational& value() const { return *value_; }
  std::string to_string() const { return defined() ? to_exact_string(*value_) : "undefined"; }

 private:
  std::optional<Rational> value_;
};

/// Value of NUMi is table[i].
using NumberTable = std::vector<Rational>;

struct MappedText {
  std::vector<std::string> tokens;
  NumberTable numbers;
};

/// Word/punctuation tokenizer shared by problem texts and equations. Numerals
/// are maximal integer or decimal literals; a word is a letter followed by
/// letters/digits/apostrophes; every other non-space character stands alone.
std::vector<std::string> tokenize(std::string_view text);

bool is_numeral(std::string_view token);

/// Replaces every numeral occurrence by NUM0, NUM1, ... in order of appearance.
MappedText map_numbers(std::string_view raw_text);

/// Splits wire-format expression text on whitespace.
std::vector<std::string> split_expression(std::string_view text);

/// Precedence-climbing parser over NUMi tokens, decimal constants,
/// + - * / and parentheses. Throws SyntaxError.
Expr parse_infix(std::span<const std::string> tokens);
Expr parse_infix(std::string_view text);

/// Infix tokens with the minimum parentheses needed to reproduce the tree.
std::vector<std::string> serialize_tokens(const Expr& expr);
/// Space-joined serialize_tokens; the expression wire format.
std::string serialize_infix(const Expr& expr);

/// Throws MissingNumber when a NUM leaf has no table entry.
ExprValue evaluate(const Expr& expr, const NumberTable& table);

/// Defined and exactly equal. Undefined equals nothing, itself included.
bool results_equal(const ExprValue& a, const ExprValue& b);

/// True when every NUM leaf indexes into a table of the given size.
bool references_within(const Expr& expr, std::size_t table_size);

/// A number-mapped word problem with its ground-truth solution.
struct MappedProblem {
  std::string id;
  std::vector<std::string> tokens;
  NumberTable numbers;
  Expr ground_truth;
};

}  // namespace genrank
