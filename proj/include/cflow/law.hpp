#pragma once

// Pointwise second-order scalar laws f(u; du; d2u; dx; d2x) over a flat jet
// vector, evaluable for double and the first two dual levels.

#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "cflow/expr.hpp"
#include "cflow/jet.hpp"

namespace cflow {

/// Flat layout of the law arguments for space-time dimension d:
///   u | u_m | u_mn (d*d) | x^m_n (d*d) | x^m_nl (d^3) | sigma^m
/// Second-derivative slots are stored in full; both orderings are present.
struct LawLayout {
  int d = 2;

  int u() const { return 0; }
  int u1(int m) const { return 1 + m; }
  int u2(int m, int n) const { return 1 + d + m * d + n; }
  int x1(int m, int n) const { return 1 + d + d * d + m * d + n; }
  int x2(int m, int n, int l) const { return 1 + d + 2 * d * d + (m * d + n) * d + l; }
  int s(int m) const { return 1 + d + 2 * d * d + d * d * d + m; }
  /// Entries that carry jet data (everything but the coordinates).
  int jet_size() const { return 1 + d + 2 * d * d + d * d * d; }
  int size() const { return jet_size() + d; }
};

template <class T>
class LawArgs {
 public:
  LawArgs(LawLayout l, std::span<const T> v) : l_(l), v_(v) {}
  int dim() const { return l_.d; }
  const T& u() const { return v_[l_.u()]; }
  const T& u(int m) const { return v_[l_.u1(m)]; }
  const T& u(int m, int n) const { return v_[l_.u2(m, n)]; }
  const T& x(int m, int n) const { return v_[l_.x1(m, n)]; }
  const T& x(int m, int n, int k) const { return v_[l_.x2(m, n, k)]; }
  const T& s(int m) const { return v_[l_.s(m)]; }

 private:
  LawLayout l_;
  std::span<const T> v_;
};

/// Fill `out` (size layout.size()) from a field jet, a flow jet and the point.
template <class T>
void pack_law_args(const LawLayout& L, const BasicJet<T>& u, const BasicMapJet<T>& x, const Point& p, std::span<T> out) {
  const int d = L.d;
  out[L.u()] = u.v;
  for (int m = 0; m < d; ++m) {
    out[L.u1(m)] = u.g[m];
    out[L.s(m)] = T(p[m]);
    for (int n = 0; n < d; ++n) {
      out[L.u2(m, n)] = u.h[m][n];
      out[L.x1(m, n)] = x.d1(m, n);
      for (int k = 0; k < d; ++k) out[L.x2(m, n, k)] = x.d2(m, n, k);
    }
  }
}

class SecondOrderScalarLaw {
 public:
  SecondOrderScalarLaw() = default;

  /// f(LawArgs<T>) -> T for T in {double, D1, D2}.
  template <class F>
  static SecondOrderScalarLaw from_functor(int dim, F f, std::string name = "custom") {
    SecondOrderScalarLaw law(dim, std::move(name));
    const LawLayout L = law.layout_;
    law.f0_ = [f, L](std::span<const double> v) { return f(LawArgs<double>(L, v)); };
    law.f1_ = [f, L](std::span<const D1> v) { return f(LawArgs<D1>(L, v)); };
    law.f2_ = [f, L](std::span<const D2> v) { return f(LawArgs<D2>(L, v)); };
    return law;
  }

  /// Expression over u, u_0.., u_00.., x_1_0.., x_1_01.., t/x/y/z, and the
  /// given named constants.
  static SecondOrderScalarLaw from_expression(int dim, const std::string& text,
                                              const std::map<std::string, double>& constants = {});

  /// Symbols understood by from_expression.
  static SymbolTable symbols(int dim, const std::map<std::string, double>& constants = {});

  int dim() const { return layout_.d; }
  const LawLayout& layout() const { return layout_; }
  const std::string& text() const { return text_; }

  template <class T>
  T eval(std::span<const T> v) const {
    if constexpr (std::is_same_v<T, double>) return f0_(v);
    else if constexpr (std::is_same_v<T, D1>) return f1_(v);
    else return f2_(v);
  }

  template <class T>
  T eval(const BasicJet<T>& u, const BasicMapJet<T>& x, const Point& p) const {
    std::vector<T> v(layout_.size());
    pack_law_args<T>(layout_, u, x, p, v);
    return eval<T>(std::span<const T>(v));
  }

  /// kappa * f
  SecondOrderScalarLaw scaled(double kappa) const;

 private:
  SecondOrderScalarLaw(int dim, std::string text);

  LawLayout layout_;
  std::string text_;
  std::function<double(std::span<const double>)> f0_;
  std::function<D1(std::span<const D1>)> f1_;
  std::function<D2(std::span<const D2>)> f2_;
};

/// u_0 - alpha u_11 in fixed coordinates.
SecondOrderScalarLaw fixed_heat_law(double alpha);
/// The heat law rewritten for a time-identity 1+1D flow, in terms of the flow jet.
SecondOrderScalarLaw intrinsic_heat_law(double alpha);
/// sum_i u_ii over the spatial axes.
SecondOrderScalarLaw laplace_law(int dim);

}  // namespace cflow
