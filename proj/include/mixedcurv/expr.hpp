#pragma once

// Small expression grammar for scenario-defined fields.
//
//   expr    := term (('+' | '-') term)*
//   term    := unary (('*' | '/') unary)*
//   unary   := '-' unary | power
//   power   := primary ('^' integer)?
//   primary := number | 'pi' | coordinate | parameter | func '(' expr ')' | '(' expr ')'
//
// Coordinates are x, y, z, w or x1..x4; func is one of sin, cos, exp, log,
// sqrt, bump. Any other identifier must name a family parameter.
// Evaluation is generic over the scalar type, so jets propagate exactly.

#include <cctype>
#include <cmath>
#include <memory>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mixedcurv/jet.hpp"

namespace mixedcurv {

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Expr {
 public:
  enum class Op { Const, Coord, Param, Add, Sub, Mul, Div, Neg, Pow, Sin, Cos, Exp, Log, Sqrt, Bump };

  Expr() : Expr(constant(0.0)) {}

  static Expr constant(double c) { return Expr(std::make_shared<Node>(Node{Op::Const, c, 0, {}})); }
  static Expr coord(int i) { return Expr(std::make_shared<Node>(Node{Op::Coord, 0.0, i, {}})); }
  static Expr param(int m) { return Expr(std::make_shared<Node>(Node{Op::Param, 0.0, m, {}})); }

  static Expr parse(const std::string& text, const std::vector<std::string>& param_names = {});

  friend Expr operator+(const Expr& a, const Expr& b) { return binary(Op::Add, a, b); }
  friend Expr operator-(const Expr& a, const Expr& b) { return binary(Op::Sub, a, b); }
  friend Expr operator*(const Expr& a, const Expr& b) { return binary(Op::Mul, a, b); }
  friend Expr operator/(const Expr& a, const Expr& b) { return binary(Op::Div, a, b); }
  friend Expr operator-(const Expr& a) { return unary(Op::Neg, a); }
  friend Expr sin(const Expr& a) { return unary(Op::Sin, a); }
  friend Expr cos(const Expr& a) { return unary(Op::Cos, a); }
  friend Expr exp(const Expr& a) { return unary(Op::Exp, a); }
  friend Expr log(const Expr& a) { return unary(Op::Log, a); }
  friend Expr sqrt(const Expr& a) { return unary(Op::Sqrt, a); }
  friend Expr bump(const Expr& a) { return unary(Op::Bump, a); }
  friend Expr pow(const Expr& a, int k) {
    auto n = std::make_shared<Node>(Node{Op::Pow, 0.0, k, {a.node_}});
    return Expr(n);
  }

  bool is_constant() const { return node_->op == Op::Const; }
  double constant_value() const { return node_->c; }
  bool is_zero() const { return is_constant() && node_->c == 0.0; }

  // Largest coordinate / parameter index referenced, or -1.
  int max_coord() const { return max_index(*node_, Op::Coord); }
  int max_param() const { return max_index(*node_, Op::Param); }

  template <class S>
  S eval(std::span<const S> coords, std::span<const S> params) const {
    return eval_node<S>(*node_, coords, params);
  }

  std::string str() const { return to_string(*node_); }

 private:
  struct Node {
    Op op;
    double c;
    int i;
    std::vector<std::shared_ptr<const Node>> kids;
  };

  explicit Expr(std::shared_ptr<const Node> n) : node_(std::move(n)) {}

  static Expr binary(Op op, const Expr& a, const Expr& b) {
    if (a.is_constant() && b.is_constant()) {
      const double x = a.node_->c, y = b.node_->c;
      switch (op) {
        case Op::Add: return constant(x + y);
        case Op::Sub: return constant(x - y);
        case Op::Mul: return constant(x * y);
        case Op::Div: return constant(x / y);
        default: break;
      }
    }
    if (op == Op::Mul && (a.is_zero() || b.is_zero())) return constant(0.0);
    if (op == Op::Add && a.is_zero()) return b;
    if ((op == Op::Add || op == Op::Sub) && b.is_zero()) return a;
    return Expr(std::make_shared<Node>(Node{op, 0.0, 0, {a.node_, b.node_}}));
  }
  static Expr unary(Op op, const Expr& a) {
    if (op == Op::Neg && a.is_constant()) return constant(-a.node_->c);
    return Expr(std::make_shared<Node>(Node{op, 0.0, 0, {a.node_}}));
  }

  static int max_index(const Node& n, Op which) {
    int m = n.op == which ? n.i : -1;
    for (const auto& k : n.kids) m = std::max(m, max_index(*k, which));
    return m;
  }

  template <class S>
  static S eval_node(const Node& n, std::span<const S> x, std::span<const S> p) {
    using std::cos, std::exp, std::log, std::sin, std::sqrt;
    switch (n.op) {
      case Op::Const: return S(n.c);
      case Op::Coord: return x[static_cast<std::size_t>(n.i)];
      case Op::Param: return p[static_cast<std::size_t>(n.i)];
      case Op::Add: return eval_node<S>(*n.kids[0], x, p) + eval_node<S>(*n.kids[1], x, p);
      case Op::Sub: return eval_node<S>(*n.kids[0], x, p) - eval_node<S>(*n.kids[1], x, p);
      case Op::Mul: return eval_node<S>(*n.kids[0], x, p) * eval_node<S>(*n.kids[1], x, p);
      case Op::Div: return eval_node<S>(*n.kids[0], x, p) / eval_node<S>(*n.kids[1], x, p);
      case Op::Neg: return S(0.0) - eval_node<S>(*n.kids[0], x, p);
      case Op::Sin: return sin(eval_node<S>(*n.kids[0], x, p));
      case Op::Cos: return cos(eval_node<S>(*n.kids[0], x, p));
      case Op::Exp: return exp(eval_node<S>(*n.kids[0], x, p));
      case Op::Log: return log(eval_node<S>(*n.kids[0], x, p));
      case Op::Sqrt: return sqrt(eval_node<S>(*n.kids[0], x, p));
      case Op::Bump: return bump(eval_node<S>(*n.kids[0], x, p));
      case Op::Pow: {
        const S base = eval_node<S>(*n.kids[0], x, p);
        const int k = n.i < 0 ? -n.i : n.i;
        S r(1.0);
        for (int j = 0; j < k; ++j) r = r * base;
        return n.i < 0 ? S(1.0) / r : r;
      }
    }
    return S(0.0);
  }

  static std::string to_string(const Node& n) {
    auto kid = [&](int j) { return to_string(*n.kids[static_cast<std::size_t>(j)]); };
    switch (n.op) {
      case Op::Const: {
        std::string s = std::to_string(n.c);
        return n.c < 0 ? "(" + s + ")" : s;
      }
      case Op::Coord: return "x" + std::to_string(n.i + 1);
      case Op::Param: return "p" + std::to_string(n.i);
      case Op::Add: return "(" + kid(0) + " + " + kid(1) + ")";
      case Op::Sub: return "(" + kid(0) + " - " + kid(1) + ")";
      case Op::Mul: return kid(0) + "*" + kid(1);
      case Op::Div: return kid(0) + "/" + kid(1);
      case Op::Neg: return "-(" + kid(0) + ")";
      case Op::Pow: return "(" + kid(0) + ")^" + std::to_string(n.i);
      case Op::Sin: return "sin(" + kid(0) + ")";
      case Op::Cos: return "cos(" + kid(0) + ")";
      case Op::Exp: return "exp(" + kid(0) + ")";
      case Op::Log: return "log(" + kid(0) + ")";
      case Op::Sqrt: return "sqrt(" + kid(0) + ")";
      case Op::Bump: return "bump(" + kid(0) + ")";
    }
    return "?";
  }

  std::shared_ptr<const Node> node_;

  friend class ExprParser;
};

class ExprParser {
 public:
  ExprParser(const std::string& text, const std::vector<std::string>& params)
      : s_(text), params_(params) {}

  Expr parse() {
    Expr e = expr();
    skip();
    if (pos_ != s_.size()) fail("unexpected trailing input");
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError("expression '" + s_ + "': " + what + " at offset " + std::to_string(pos_));
  }
  void skip() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  bool eat(char c) {
    skip();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  Expr expr() {
    Expr e = term();
    for (;;) {
      if (eat('+')) e = e + term();
      else if (eat('-')) e = e - term();
      else return e;
    }
  }
  Expr term() {
    Expr e = unary();
    for (;;) {
      if (eat('*')) e = e * unary();
      else if (eat('/')) e = e / unary();
      else return e;
    }
  }
  Expr unary() {
    if (eat('-')) return -unary();
    if (eat('+')) return unary();
    return power();
  }
  Expr power() {
    Expr base = primary();
    if (eat('^')) {
      skip();
      bool neg = eat('-');
      skip();
      const std::size_t start = pos_;
      while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
      if (start == pos_) fail("exponent must be an integer literal");
      int k = std::stoi(s_.substr(start, pos_ - start));
      return pow(base, neg ? -k : k);
    }
    return base;
  }
  Expr primary() {
    skip();
    if (pos_ >= s_.size()) fail("unexpected end of input");
    const char c = s_[pos_];
    if (c == '(') {
      ++pos_;
      Expr e = expr();
      if (!eat(')')) fail("expected ')'");
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(s_.substr(pos_), &used);
      } catch (const std::exception&) {
        fail("bad number");
      }
      pos_ += used;
      return Expr::constant(v);
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      const std::size_t start = pos_;
      while (pos_ < s_.size() &&
             (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_'))
        ++pos_;
      const std::string id = s_.substr(start, pos_ - start);
      if (id == "sin" || id == "cos" || id == "exp" || id == "log" || id == "sqrt" ||
          id == "bump") {
        if (!eat('(')) fail("expected '(' after " + id);
        Expr a = expr();
        if (!eat(')')) fail("expected ')'");
        if (id == "sin") return sin(a);
        if (id == "cos") return cos(a);
        if (id == "exp") return exp(a);
        if (id == "log") return log(a);
        if (id == "sqrt") return sqrt(a);
        return bump(a);
      }
      if (id == "pi") return Expr::constant(std::numbers::pi);
      if (id == "x") return Expr::coord(0);
      if (id == "y") return Expr::coord(1);
      if (id == "z") return Expr::coord(2);
      if (id == "w") return Expr::coord(3);
      if (id.size() == 2 && id[0] == 'x' && id[1] >= '1' && id[1] <= '9')
        return Expr::coord(id[1] - '1');
      for (std::size_t m = 0; m < params_.size(); ++m)
        if (params_[m] == id) return Expr::param(static_cast<int>(m));
      fail("unknown identifier '" + id + "'");
    }
    fail(std::string("unexpected character '") + c + "'");
  }

  std::string s_;
  const std::vector<std::string>& params_;
  std::size_t pos_ = 0;
};

inline Expr Expr::parse(const std::string& text, const std::vector<std::string>& param_names) {
  return ExprParser(text, param_names).parse();
}

}  // namespace mixedcurv
