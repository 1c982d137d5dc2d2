#include "genrank/expr.hpp"

#include <cctype>
#include <charconv>

#include "genrank/error.hpp"

namespace genrank {

using boost::multiprecision::cpp_int;

Rational parse_rational(std::string_view text) {
  if (auto slash = text.find('/'); slash != std::string_view::npos) {
    Rational num = parse_rational(text.substr(0, slash));
    Rational den = parse_rational(text.substr(slash + 1));
    if (den == 0) throw ParseError("zero denominator in '" + std::string(text) + "'");
    return num / den;
  }
  bool negative = false;
  if (!text.empty() && (text.front() == '-' || text.front() == '+')) {
    negative = text.front() == '-';
    text.remove_prefix(1);
  }
  if (text.empty()) throw ParseError("empty number");
  cpp_int digits = 0;
  cpp_int scale = 1;
  bool seen_point = false;
  bool seen_digit = false;
  for (char c : text) {
    if (c == '.' && !seen_point) {
      seen_point = true;
    } else if (std::isdigit(static_cast<unsigned char>(c))) {
      digits = digits * 10 + (c - '0');
      if (seen_point) scale *= 10;
      seen_digit = true;
    } else {
      throw ParseError("not a number: '" + std::string(text) + "'");
    }
  }
  if (!seen_digit) throw ParseError("not a number: '" + std::string(text) + "'");
  Rational r(digits, scale);
  return negative ? Rational(-r) : r;
}

std::optional<std::string> to_decimal_string(const Rational& value) {
  cpp_int num = boost::multiprecision::numerator(value);
  cpp_int den = boost::multiprecision::denominator(value);
  int twos = 0, fives = 0;
  cpp_int rest = den;
  while (rest % 2 == 0) rest /= 2, ++twos;
  while (rest % 5 == 0) rest /= 5, ++fives;
  if (rest != 1) return std::nullopt;
  const int places = std::max(twos, fives);
  cpp_int scaled = num * boost::multiprecision::pow(cpp_int(10), places) / den;
  const bool negative = scaled < 0;
  if (negative) scaled = -scaled;
  std::string digits = scaled.str();
  if (places > 0) {
    if (static_cast<int>(digits.size()) <= places) {
      digits.insert(0, static_cast<std::size_t>(places) + 1 - digits.size(), '0');
    }
    digits.insert(digits.size() - static_cast<std::size_t>(places), ".");
  }
  return negative ? "-" + digits : digits;
}

std::string to_exact_string(const Rational& value) {
  if (auto d = to_decimal_string(value)) return *d;
  return boost::multiprecision::numerator(value).str() + "/" +
         boost::multiprecision::denominator(value).str();
}

std::optional<Op> op_from_token(std::string_view token) {
  if (token.size() != 1) return std::nullopt;
  switch (token[0]) {
    case '+': return Op::Add;
    case '-': return Op::Sub;
    case '*': return Op::Mul;
    case '/': return Op::Div;
    default: return std::nullopt;
  }
}

std::string num_token(int index) { return "NUM" + std::to_string(index); }

std::optional<int> parse_num_token(std::string_view token) {
  if (token.size() < 4 || token.substr(0, 3) != "NUM") return std::nullopt;
  auto digits = token.substr(3);
  if (digits.size() > 1 && digits[0] == '0') return std::nullopt;
  int value = 0;
  auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), value);
  if (ec != std::errc() || ptr != digits.data() + digits.size()) return std::nullopt;
  return value;
}

// ---------------------------------------------------------------------------
// Expr

struct Expr::Node {
  bool leaf = true;
  Op op = Op::Add;
  Operand operand;
  std::optional<Expr> left;
  std::optional<Expr> right;
  std::size_t leaves = 1;
  std::size_t depth = 1;
};

Expr Expr::num(int index) {
  if (index < 0) throw std::invalid_argument("negative NUM index");
  return leaf(NumRef{index});
}

Expr Expr::constant(Rational value) {
  if (value < 0 || !to_decimal_string(value)) {
    throw std::invalid_argument("constant must be a non-negative terminating decimal");
  }
  return leaf(std::move(value));
}

Expr Expr::leaf(Operand operand) {
  auto n = std::make_shared<Node>();
  n->operand = std::move(operand);
  return Expr(std::move(n));
}

Expr Expr::binary(Op op, Expr left, Expr right) {
  auto n = std::make_shared<Node>();
  n->leaf = false;
  n->op = op;
  n->leaves = left.leaf_count() + right.leaf_count();
  n->depth = 1 + std::max(left.depth(), right.depth());
  n->left = std::move(left);
  n->right = std::move(right);
  return Expr(std::move(n));
}

bool Expr::is_leaf() const { return node_->leaf; }
Op Expr::op() const { return node_->op; }
const Expr& Expr::left() const { return *node_->left; }
const Expr& Expr::right() const { return *node_->right; }
const Operand& Expr::operand() const { return node_->operand; }
std::size_t Expr::leaf_count() const { return node_->leaves; }
std::size_t Expr::op_count() const { return node_->leaves - 1; }
std::size_t Expr::depth() const { return node_->depth; }

bool operator==(const Expr& a, const Expr& b) {
  if (a.node_ == b.node_) return true;
  if (a.is_leaf() != b.is_leaf()) return false;
  if (a.is_leaf()) return a.operand() == b.operand();
  return a.op() == b.op() && a.leaf_count() == b.leaf_count() && a.left() == b.left() &&
         a.right() == b.right();
}

// ---------------------------------------------------------------------------
// Tokenization and number mapping

namespace {

bool is_digit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }
bool is_alpha(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; }

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
    } else if (is_digit(c)) {
      std::size_t j = i;
      while (j < text.size() && is_digit(text[j])) ++j;
      if (j + 1 < text.size() && text[j] == '.' && is_digit(text[j + 1])) {
        ++j;
        while (j < text.size() && is_digit(text[j])) ++j;
      }
      out.emplace_back(text.substr(i, j - i));
      i = j;
    } else if (is_alpha(c)) {
      std::size_t j = i;
      while (j < text.size() && (is_alpha(text[j]) || is_digit(text[j]) || text[j] == '\'')) ++j;
      out.emplace_back(text.substr(i, j - i));
      i = j;
    } else if (static_cast<unsigned char>(c) >= 0x80) {
      // Keep UTF-8 sequences whole.
      std::size_t j = i + 1;
      while (j < text.size() && (static_cast<unsigned char>(text[j]) & 0xC0) == 0x80) ++j;
      out.emplace_back(text.substr(i, j - i));
      i = j;
    } else {
      out.emplace_back(1, c);
      ++i;
    }
  }
  return out;
}

bool is_numeral(std::string_view token) {
  if (token.empty() || !is_digit(token.front()) || !is_digit(token.back())) return false;
  bool point = false;
  for (char c : token) {
    if (c == '.') {
      if (point) return false;
      point = true;
    } else if (!is_digit(c)) {
      return false;
    }
  }
  return true;
}

MappedText map_numbers(std::string_view raw_text) {
  MappedText mapped;
  for (auto& tok : tokenize(raw_text)) {
    if (is_numeral(tok)) {
      mapped.tokens.push_back(num_token(static_cast<int>(mapped.numbers.size())));
      mapped.numbers.push_back(parse_rational(tok));
    } else {
      mapped.tokens.push_back(std::move(tok));
    }
  }
  return mapped;
}

std::vector<std::string> split_expression(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) out.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Parsing

namespace {

class InfixParser {
 public:
  explicit InfixParser(std::span<const std::string> tokens) : tokens_(tokens) {}

  Expr parse() {
    if (tokens_.empty()) throw SyntaxError("empty expression");
    Expr e = parse_binary(1);
    if (pos_ != tokens_.size()) fail("unexpected '" + tokens_[pos_] + "'");
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw SyntaxError(what + " at token " + std::to_string(pos_));
  }

  // Left-associative precedence climbing.
  Expr parse_binary(int min_prec) {
    Expr lhs = parse_primary();
    while (pos_ < tokens_.size()) {
      auto op = op_from_token(tokens_[pos_]);
      if (!op || op_precedence(*op) < min_prec) break;
      ++pos_;
      Expr rhs = parse_binary(op_precedence(*op) + 1);
      lhs = Expr::binary(*op, std::move(lhs), std::move(rhs));
    }
    return lhs;
  }

  Expr parse_primary() {
    if (pos_ >= tokens_.size()) fail("expression ends early");
    const std::string& tok = tokens_[pos_];
    if (tok == "(") {
      ++pos_;
      Expr inner = parse_binary(1);
      if (pos_ >= tokens_.size() || tokens_[pos_] != ")") fail("unbalanced '('");
      ++pos_;
      return inner;
    }
    if (auto idx = parse_num_token(tok)) {
      ++pos_;
      return Expr::num(*idx);
    }
    if (is_numeral(tok)) {
      ++pos_;
      return Expr::constant(parse_rational(tok));
    }
    fail("expected operand, found '" + tok + "'");
  }

  std::span<const std::string> tokens_;
  std::size_t pos_ = 0;
};

void emit(const Expr& e, std::vector<std::string>& out) {
  if (e.is_leaf()) {
    if (auto* n = std::get_if<NumRef>(&e.operand())) {
      out.push_back(num_token(n->index));
    } else {
      out.push_back(*to_decimal_string(std::get<Rational>(e.operand())));
    }
    return;
  }
  const int prec = op_precedence(e.op());
  auto child = [&](const Expr& c, bool right_side) {
    const bool parens =
        !c.is_leaf() && (op_precedence(c.op()) < prec || (right_side && op_precedence(c.op()) == prec));
    if (parens) out.emplace_back("(");
    emit(c, out);
    if (parens) out.emplace_back(")");
  };
  child(e.left(), false);
  out.emplace_back(1, op_symbol(e.op()));
  child(e.right(), true);
}

ExprValue eval_rec(const Expr& e, const NumberTable& table) {
  if (e.is_leaf()) {
    if (auto* n = std::get_if<NumRef>(&e.operand())) return ExprValue::of(table[static_cast<std::size_t>(n->index)]);
    return ExprValue::of(std::get<Rational>(e.operand()));
  }
  ExprValue l = eval_rec(e.left(), table);
  if (!l.defined()) return l;
  ExprValue r = eval_rec(e.right(), table);
  if (!r.defined()) return r;
  switch (e.op()) {
    case Op::Add: return ExprValue::of(l.value() + r.value());
    case Op::Sub: return ExprValue::of(l.value() - r.value());
    case Op::Mul: return ExprValue::of(l.value() * r.value());
    case Op::Div:
      if (r.value() == 0) return ExprValue::undefined();
      return ExprValue::of(l.value() / r.value());
  }
  return ExprValue::undefined();
}

std::optional<int> max_num_index(const Expr& e) {
  if (e.is_leaf()) {
    if (auto* n = std::get_if<NumRef>(&e.operand())) return n->index;
    return std::nullopt;
  }
  auto l = max_num_index(e.left());
  auto r = max_num_index(e.right());
  if (!l) return r;
  if (!r) return l;
  return std::max(*l, *r);
}

}  // namespace

Expr parse_infix(std::span<const std::string> tokens) { return InfixParser(tokens).parse(); }

Expr parse_infix(std::string_view text) {
  auto tokens = split_expression(text);
  return parse_infix(std::span<const std::string>(tokens));
}

std::vector<std::string> serialize_tokens(const Expr& expr) {
  std::vector<std::string> out;
  emit(expr, out);
  return out;
}

std::string serialize_infix(const Expr& expr) {
  std::string s;
  for (auto& t : serialize_tokens(expr)) {
    if (!s.empty()) s += ' ';
    s += t;
  }
  return s;
}

bool references_within(const Expr& expr, std::size_t table_size) {
  auto m = max_num_index(expr);
  return !m || static_cast<std::size_t>(*m) < table_size;
}

ExprValue evaluate(const Expr& expr, const NumberTable& table) {
  if (auto m = max_num_index(expr); m && static_cast<std::size_t>(*m) >= table.size()) {
    throw MissingNumber(num_token(*m) + " has no entry in the number table");
  }
  return eval_rec(expr, table);
}

bool results_equal(const ExprValue& a, const ExprValue& b) {
  return a.defined() && b.defined() && a.value() == b.value();
}

}  // namespace genrank
