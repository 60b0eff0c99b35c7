#pragma once
//===----------------------------------------------------------------------===//
// Arithmetic expressions for Calculate nodes: +, -, *, / (unicode × and ÷
// accepted on input), decimal literals, parentheses, and identifiers that
// reference predecessor node ids.
//
// Evaluation is exact: literals become rationals, every operation stays in
// Q, and a double is produced only when a caller asks for one. That keeps
// results independent of the particular DAG shape the optimizer produced.
//===----------------------------------------------------------------------===//

#include <map>
#include <memory>
#include <set>
#include <string>

#include <boost/multiprecision/cpp_int.hpp>

#include "faforge/error.hpp"

namespace faforge {

using Rational = boost::multiprecision::cpp_rational;
using BigInt = boost::multiprecision::cpp_int;

struct CalcNode;
using CalcPtr = std::shared_ptr<const CalcNode>;

struct CalcNode {
  enum class Kind { Add, Sub, Mul, Div, Neg, Num, Ref };
  Kind kind;
  Rational number;  // Num
  std::string ref;  // Ref
  CalcPtr lhs, rhs; // binary operands; Neg uses lhs only
};

namespace detail {

inline CalcPtr mk_num(Rational r) {
  auto n = std::make_shared<CalcNode>();
  n->kind = CalcNode::Kind::Num;
  n->number = std::move(r);
  return n;
}
inline CalcPtr mk_ref(std::string id) {
  auto n = std::make_shared<CalcNode>();
  n->kind = CalcNode::Kind::Ref;
  n->ref = std::move(id);
  return n;
}
inline CalcPtr mk_un(CalcNode::Kind k, CalcPtr x) {
  auto n = std::make_shared<CalcNode>();
  n->kind = k;
  n->lhs = std::move(x);
  return n;
}
inline CalcPtr mk_bin(CalcNode::Kind k, CalcPtr l, CalcPtr r) {
  auto n = std::make_shared<CalcNode>();
  n->kind = k;
  n->lhs = std::move(l);
  n->rhs = std::move(r);
  return n;
}

struct CalcParser {
  const std::string& src;
  size_t pos = 0;

  explicit CalcParser(const std::string& s) : src(s) {}

  [[noreturn]] void fail(const std::string& msg) {
    throw Error(ErrorCode::ParseError,
                "calc_expr at offset " + std::to_string(pos) + ": " + msg);
  }

  void skip_ws() {
    while (pos < src.size() && (src[pos] == ' ' || src[pos] == '\t')) ++pos;
  }

  // Returns 0 when no operator is next; otherwise consumes it.
  // Handles ASCII + - * / and UTF-8 × (c3 97), ÷ (c3 b7), − (e2 88 92).
  char take_op(const char* allowed) {
    skip_ws();
    if (pos >= src.size()) return 0;
    char c = src[pos];
    auto accept = [&](char canon, size_t len) -> char {
      for (const char* a = allowed; *a; ++a)
        if (*a == canon) {
          pos += len;
          return canon;
        }
      return 0;
    };
    if (c == '+' || c == '-' || c == '*' || c == '/') return accept(c, 1);
    if (pos + 1 < src.size() && static_cast<unsigned char>(c) == 0xc3) {
      unsigned char d = static_cast<unsigned char>(src[pos + 1]);
      if (d == 0x97) return accept('*', 2); // ×
      if (d == 0xb7) return accept('/', 2); // ÷
    }
    if (pos + 2 < src.size() && static_cast<unsigned char>(c) == 0xe2 &&
        static_cast<unsigned char>(src[pos + 1]) == 0x88 &&
        static_cast<unsigned char>(src[pos + 2]) == 0x92)
      return accept('-', 3); // −
    return 0;
  }

  CalcPtr parse_expr() {
    CalcPtr node = parse_term();
    while (char op = take_op("+-"))
      node = mk_bin(op == '+' ? CalcNode::Kind::Add : CalcNode::Kind::Sub, node, parse_term());
    return node;
  }

  CalcPtr parse_term() {
    CalcPtr node = parse_unary();
    while (char op = take_op("*/"))
      node = mk_bin(op == '*' ? CalcNode::Kind::Mul : CalcNode::Kind::Div, node, parse_unary());
    return node;
  }

  CalcPtr parse_unary() {
    skip_ws();
    if (take_op("-")) return mk_un(CalcNode::Kind::Neg, parse_unary());
    return parse_primary();
  }

  CalcPtr parse_primary() {
    skip_ws();
    if (pos >= src.size()) fail("unexpected end of expression");
    char c = src[pos];
    if (c == '(') {
      ++pos;
      CalcPtr inner = parse_expr();
      skip_ws();
      if (pos >= src.size() || src[pos] != ')') fail("missing ')'");
      ++pos;
      return inner;
    }
    if (c >= '0' && c <= '9') return parse_number();
    if ((c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_') return parse_ident();
    fail(std::string("unexpected character '") + c + "'");
  }

  CalcPtr parse_number() {
    BigInt whole = 0;
    while (pos < src.size() && src[pos] >= '0' && src[pos] <= '9') {
      whole = whole * 10 + (src[pos] - '0');
      ++pos;
    }
    Rational value(whole);
    if (pos < src.size() && src[pos] == '.') {
      ++pos;
      if (pos >= src.size() || src[pos] < '0' || src[pos] > '9')
        fail("digit expected after decimal point");
      BigInt frac = 0, denom = 1;
      while (pos < src.size() && src[pos] >= '0' && src[pos] <= '9') {
        frac = frac * 10 + (src[pos] - '0');
        denom *= 10;
        ++pos;
      }
      value += Rational(frac, denom);
    }
    return mk_num(std::move(value));
  }

  CalcPtr parse_ident() {
    size_t start = pos;
    while (pos < src.size() &&
           ((src[pos] >= 'a' && src[pos] <= 'z') || (src[pos] >= 'A' && src[pos] <= 'Z') ||
            (src[pos] >= '0' && src[pos] <= '9') || src[pos] == '_'))
      ++pos;
    return mk_ref(src.substr(start, pos - start));
  }
};

inline int calc_prec(CalcNode::Kind k) {
  switch (k) {
    case CalcNode::Kind::Add:
    case CalcNode::Kind::Sub: return 1;
    case CalcNode::Kind::Mul:
    case CalcNode::Kind::Div: return 2;
    case CalcNode::Kind::Neg: return 3;
    default: return 4;
  }
}

} // namespace detail

inline CalcPtr parse_calc(const std::string& text) {
  detail::CalcParser p(text);
  p.skip_ws();
  if (p.pos >= text.size())
    throw Error(ErrorCode::ParseError, "calc_expr is empty");
  CalcPtr node = p.parse_expr();
  p.skip_ws();
  if (p.pos != text.size()) p.fail("trailing characters");
  return node;
}

inline void collect_calc_refs(const CalcPtr& n, std::set<std::string>& out) {
  if (!n) return;
  if (n->kind == CalcNode::Kind::Ref) out.insert(n->ref);
  collect_calc_refs(n->lhs, out);
  collect_calc_refs(n->rhs, out);
}

inline std::set<std::string> calc_refs(const CalcPtr& n) {
  std::set<std::string> out;
  collect_calc_refs(n, out);
  return out;
}

inline std::set<std::string> calc_refs(const std::string& expr) {
  return calc_refs(parse_calc(expr));
}

inline bool calc_contains(const CalcPtr& n, CalcNode::Kind k) {
  if (!n) return false;
  if (n->kind == k) return true;
  return calc_contains(n->lhs, k) || calc_contains(n->rhs, k);
}

inline Rational eval_calc(const CalcPtr& n, const std::map<std::string, Rational>& env) {
  switch (n->kind) {
    case CalcNode::Kind::Num: return n->number;
    case CalcNode::Kind::Ref: {
      auto it = env.find(n->ref);
      if (it == env.end())
        throw Error(ErrorCode::UnboundName, "calc_expr references '" + n->ref + "' which has no value");
      return it->second;
    }
    case CalcNode::Kind::Neg: return -eval_calc(n->lhs, env);
    case CalcNode::Kind::Add: return eval_calc(n->lhs, env) + eval_calc(n->rhs, env);
    case CalcNode::Kind::Sub: return eval_calc(n->lhs, env) - eval_calc(n->rhs, env);
    case CalcNode::Kind::Mul: return eval_calc(n->lhs, env) * eval_calc(n->rhs, env);
    case CalcNode::Kind::Div: {
      Rational denom = eval_calc(n->rhs, env);
      if (denom == 0)
        throw Error(ErrorCode::DivisionByZero, "calc_expr divides by zero");
      return eval_calc(n->lhs, env) / denom;
    }
  }
  throw Error(ErrorCode::InvalidArgument, "corrupt calc expression tree");
}

// Convenience surface over doubles (exact underneath; one rounding at the end).
inline double eval_calc(const std::string& expr, const std::map<std::string, double>& env) {
  std::map<std::string, Rational> renv;
  for (auto& [k, v] : env) renv.emplace(k, Rational(v));
  return eval_calc(parse_calc(expr), renv).convert_to<double>();
}

// Canonical ASCII form with minimal parentheses; parse(print(t)) prints the
// same string, so canonical keys are stable.
inline std::string print_calc(const CalcPtr& n) {
  using Kind = CalcNode::Kind;
  int p = detail::calc_prec(n->kind);
  switch (n->kind) {
    case Kind::Num: {
      BigInt num = boost::multiprecision::numerator(n->number);
      BigInt den = boost::multiprecision::denominator(n->number);
      std::string sign = num < 0 ? "-" : "";
      if (num < 0) num = -num;
      if (den == 1) return sign + num.str();
      // literals come from decimal text, so den = 2^a * 5^b; print the exact
      // decimal expansion (trailing zeros normalized away by reduction)
      BigInt d = den;
      unsigned a = 0, b = 0;
      while (d % 2 == 0) { d /= 2; ++a; }
      while (d % 5 == 0) { d /= 5; ++b; }
      if (d == 1) {
        unsigned k = std::max(a, b);
        BigInt scaled = num * boost::multiprecision::pow(BigInt(10), k) / den;
        std::string digits = scaled.str();
        if (digits.size() <= k) digits = std::string(k + 1 - digits.size(), '0') + digits;
        digits.insert(digits.size() - k, ".");
        return sign + digits;
      }
      return "(" + sign + num.str() + " / " + den.str() + ")";
    }
    case Kind::Ref: return n->ref;
    case Kind::Neg: {
      std::string inner = print_calc(n->lhs);
      if (detail::calc_prec(n->lhs->kind) < p) inner = "(" + inner + ")";
      return "-" + inner;
    }
    default: {
      const char* op = n->kind == Kind::Add ? " + "
                       : n->kind == Kind::Sub ? " - "
                       : n->kind == Kind::Mul ? " * "
                                              : " / ";
      std::string l = print_calc(n->lhs);
      std::string r = print_calc(n->rhs);
      if (detail::calc_prec(n->lhs->kind) < p) l = "(" + l + ")";
      int rp = detail::calc_prec(n->rhs->kind);
      if (rp < p || (rp == p && (n->kind == Kind::Sub || n->kind == Kind::Div)))
        r = "(" + r + ")";
      return l + op + r;
    }
  }
}

inline CalcPtr rewrite_calc_refs(const CalcPtr& n,
                                 const std::map<std::string, std::string>& renames) {
  if (!n) return nullptr;
  if (n->kind == CalcNode::Kind::Ref) {
    auto it = renames.find(n->ref);
    if (it == renames.end()) return n;
    return detail::mk_ref(it->second);
  }
  if (!n->lhs && !n->rhs) return n;
  auto copy = std::make_shared<CalcNode>(*n);
  copy->lhs = rewrite_calc_refs(n->lhs, renames);
  copy->rhs = rewrite_calc_refs(n->rhs, renames);
  return copy;
}

// Canonical textual form of an expression (whitespace/unicode-insensitive).
inline std::string canonical_calc(const std::string& expr) {
  return print_calc(parse_calc(expr));
}

} // namespace faforge
