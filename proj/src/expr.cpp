#include "cflow/expr.hpp"

#include <cctype>
#include <cstdlib>

namespace cflow {

SymbolTable spacetime_symbols(int d) {
  SymbolTable s;
  static const char* alias[] = {"t", "x", "y", "z"};
  for (int i = 0; i < d; ++i) {
    s.add("s" + std::to_string(i), i);
    s.add(alias[i], i);
  }
  return s;
}

// Recursive descent:
//   expr  := term (('+'|'-') term)*
//   term  := unary (('*'|'/') unary)*
//   unary := ('-'|'+') unary | power
//   power := primary ('^' unary)?
//   primary := number | name | name '(' expr (',' expr)* ')' | '(' expr ')'
class ExprParser {
 public:
  ExprParser(const std::string& text, const SymbolTable& symbols) : s_(text), sym_(symbols) {}

  Expr run() {
    Expr e;
    e.text_ = s_;
    out_ = &e;
    expr();
    skip();
    if (pos_ != s_.size()) throw ExprError("unexpected '" + std::string(1, s_[pos_]) + "'", pos_);
    if (e.nodes_.empty()) throw ExprError("empty expression", 0);
    return e;
  }

 private:
  int push(Expr::Node n) {
    if (n.op == Expr::Op::Var) out_->arity_ = std::max(out_->arity_, n.slot + 1);
    out_->nodes_.push_back(n);
    return static_cast<int>(out_->nodes_.size()) - 1;
  }

  void skip() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  bool accept(char c) {
    skip();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }
  void expect(char c) {
    if (!accept(c)) throw ExprError(std::string("expected '") + c + "'", pos_);
  }

  int expr() {
    int lhs = term();
    for (;;) {
      if (accept('+')) lhs = push({Expr::Op::Add, lhs, term()});
      else if (accept('-')) lhs = push({Expr::Op::Sub, lhs, term()});
      else return lhs;
    }
  }

  int term() {
    int lhs = unary();
    for (;;) {
      if (accept('*')) lhs = push({Expr::Op::Mul, lhs, unary()});
      else if (accept('/')) lhs = push({Expr::Op::Div, lhs, unary()});
      else return lhs;
    }
  }

  int unary() {
    if (accept('-')) return push({Expr::Op::Neg, unary()});
    if (accept('+')) return unary();
    return power();
  }

  int power() {
    int base = primary();
    if (!accept('^')) return base;
    int ex = unary();
    const auto& en = out_->nodes_[ex];
    if (en.op == Expr::Op::Const && en.value == std::round(en.value) && std::abs(en.value) <= 64) {
      Expr::Node n{Expr::Op::PowInt, base};
      n.value = en.value;
      return push(n);
    }
    if (en.op == Expr::Op::Neg && out_->nodes_[en.a].op == Expr::Op::Const) {
      double v = -out_->nodes_[en.a].value;
      if (v == std::round(v) && std::abs(v) <= 64) {
        Expr::Node n{Expr::Op::PowInt, base};
        n.value = v;
        return push(n);
      }
    }
    return push({Expr::Op::Pow, base, ex});
  }

  int primary() {
    skip();
    if (pos_ >= s_.size()) throw ExprError("unexpected end of expression", pos_);
    char c = s_[pos_];
    if (accept('(')) {
      int e = expr();
      expect(')');
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      const char* begin = s_.c_str() + pos_;
      char* end = nullptr;
      double v = std::strtod(begin, &end);
      if (end == begin) throw ExprError("bad number", pos_);
      pos_ += static_cast<std::size_t>(end - begin);
      Expr::Node n{Expr::Op::Const};
      n.value = v;
      return push(n);
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t start = pos_;
      while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) ++pos_;
      std::string name = s_.substr(start, pos_ - start);
      if (accept('(')) return call(name, start);
      if (const int* slot = sym_.find(name)) {
        Expr::Node n{Expr::Op::Var};
        n.slot = *slot;
        return push(n);
      }
      if (const double* c = sym_.find_constant(name)) {
        Expr::Node n{Expr::Op::Const};
        n.value = *c;
        return push(n);
      }
      if (name == "pi" || name == "e") {
        Expr::Node n{Expr::Op::Const};
        n.value = name == "pi" ? std::numbers::pi : std::numbers::e;
        return push(n);
      }
      throw ExprError("unknown symbol '" + name + "'", start);
    }
    throw ExprError("unexpected '" + std::string(1, c) + "'", pos_);
  }

  int call(const std::string& name, std::size_t at) {
    static const std::map<std::string, Expr::Op> unary_fns = {
        {"sin", Expr::Op::Sin},   {"cos", Expr::Op::Cos},   {"tan", Expr::Op::Tan},   {"exp", Expr::Op::Exp},
        {"log", Expr::Op::Log},   {"sqrt", Expr::Op::Sqrt}, {"sinh", Expr::Op::Sinh}, {"cosh", Expr::Op::Cosh},
        {"tanh", Expr::Op::Tanh}, {"atan", Expr::Op::Atan}};
    int a = expr();
    if (name == "pow") {
      expect(',');
      int b = expr();
      expect(')');
      return push({Expr::Op::Pow, a, b});
    }
    expect(')');
    auto it = unary_fns.find(name);
    if (it == unary_fns.end()) throw ExprError("unknown function '" + name + "'", at);
    return push({it->second, a});
  }

  const std::string& s_;
  const SymbolTable& sym_;
  std::size_t pos_ = 0;
  Expr* out_ = nullptr;
};

Expr Expr::parse(const std::string& text, const SymbolTable& symbols) { return ExprParser(text, symbols).run(); }

Expr Expr::constant(double c) {
  Expr e;
  Node n{Op::Const};
  n.value = c;
  e.nodes_.push_back(n);
  e.text_ = std::to_string(c);
  return e;
}

bool Expr::uses_slot(int slot) const {
  for (const auto& n : nodes_)
    if (n.op == Op::Var && n.slot == slot) return true;
  return false;
}

}  // namespace cflow
