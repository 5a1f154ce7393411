#pragma once

// A small arithmetic expression language: + - * / ^, unary minus, numeric
// literals, named variables, the constants pi and e, and the functions
// sin cos tan exp log sqrt sinh cosh tanh atan pow.
//
// Expressions are parsed once into a flat node array and evaluated for any
// scalar type of the dual-number tower, so every expression is exactly
// differentiable.

#include <cmath>
#include <map>
#include <memory>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cflow/dual.hpp"

namespace cflow {

class ExprError : public std::runtime_error {
 public:
  ExprError(const std::string& msg, std::size_t pos)
      : std::runtime_error(msg + " at column " + std::to_string(pos + 1)), pos_(pos) {}
  std::size_t position() const { return pos_; }

 private:
  std::size_t pos_;
};

/// Name -> variable slot mapping used at parse time.
class SymbolTable {
 public:
  void add(const std::string& name, int slot) { slots_[name] = slot; }
  /// Named constant, substituted at parse time.
  void add_constant(const std::string& name, double value) { consts_[name] = value; }
  const int* find(const std::string& name) const {
    auto it = slots_.find(name);
    return it == slots_.end() ? nullptr : &it->second;
  }
  const double* find_constant(const std::string& name) const {
    auto it = consts_.find(name);
    return it == consts_.end() ? nullptr : &it->second;
  }
  int size() const {
    int n = 0;
    for (const auto& [k, v] : slots_) n = std::max(n, v + 1);
    return n;
  }

 private:
  std::map<std::string, int> slots_;
  std::map<std::string, double> consts_;
};

/// Symbols t/s0, x/s1, y/s2, z/s3 for a space-time dimension d.
SymbolTable spacetime_symbols(int d);

class Expr {
 public:
  enum class Op { Const, Var, Neg, Add, Sub, Mul, Div, PowInt, Pow, Sin, Cos, Tan, Exp, Log, Sqrt, Sinh, Cosh, Tanh, Atan };

  struct Node {
    Op op;
    int a = -1;
    int b = -1;
    double value = 0.0;  // constant, or integer exponent for PowInt
    int slot = -1;
  };

  static Expr parse(const std::string& text, const SymbolTable& symbols);
  static Expr constant(double c);

  const std::string& text() const { return text_; }
  /// Highest variable slot referenced plus one.
  int arity() const { return arity_; }
  bool uses_slot(int slot) const;

  template <class T>
  T eval(std::span<const T> vars) const {
    std::vector<T> val(nodes_.size());
    for (std::size_t i = 0; i < nodes_.size(); ++i) val[i] = apply<T>(nodes_[i], val, vars);
    return val.back();
  }

 private:
  template <class T>
  static T apply(const Node& n, const std::vector<T>& val, std::span<const T> vars) {
    using std::atan, std::cos, std::cosh, std::exp, std::log, std::pow, std::sin, std::sinh, std::sqrt, std::tan,
        std::tanh;
    switch (n.op) {
      case Op::Const: return T(n.value);
      case Op::Var: return vars[n.slot];
      case Op::Neg: return -val[n.a];
      case Op::Add: return val[n.a] + val[n.b];
      case Op::Sub: return val[n.a] - val[n.b];
      case Op::Mul: return val[n.a] * val[n.b];
      case Op::Div: return val[n.a] / val[n.b];
      case Op::PowInt: return ipow(val[n.a], static_cast<int>(n.value));
      case Op::Pow: return pow(val[n.a], val[n.b]);
      case Op::Sin: return sin(val[n.a]);
      case Op::Cos: return cos(val[n.a]);
      case Op::Tan: return tan(val[n.a]);
      case Op::Exp: return exp(val[n.a]);
      case Op::Log: return log(val[n.a]);
      case Op::Sqrt: return sqrt(val[n.a]);
      case Op::Sinh: return sinh(val[n.a]);
      case Op::Cosh: return cosh(val[n.a]);
      case Op::Tanh: return tanh(val[n.a]);
      case Op::Atan: return atan(val[n.a]);
    }
    return T(0.0);
  }

  friend class ExprParser;
  std::vector<Node> nodes_;
  std::string text_;
  int arity_ = 0;
};

}  // namespace cflow
