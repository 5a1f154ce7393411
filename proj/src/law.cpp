#include "cflow/law.hpp"

#include <stdexcept>

namespace cflow {

SecondOrderScalarLaw::SecondOrderScalarLaw(int dim, std::string text) : text_(std::move(text)) {
  if (dim < 2 || dim > kMaxDim) throw std::invalid_argument("law: dimension must be 2..4");
  layout_.d = dim;
}

SymbolTable SecondOrderScalarLaw::symbols(int dim, const std::map<std::string, double>& constants) {
  const LawLayout L{dim};
  SymbolTable s;
  static const char* alias[] = {"t", "x", "y", "z"};
  s.add("u", L.u());
  for (int m = 0; m < dim; ++m) {
    const std::string M = std::to_string(m);
    s.add("u_" + M, L.u1(m));
    s.add("s" + M, L.s(m));
    s.add(alias[m], L.s(m));
    for (int n = 0; n < dim; ++n) {
      const std::string N = std::to_string(n);
      s.add("u_" + M + N, L.u2(m, n));
      s.add("x_" + M + "_" + N, L.x1(m, n));
      for (int k = 0; k < dim; ++k) s.add("x_" + M + "_" + N + std::to_string(k), L.x2(m, n, k));
    }
  }
  for (const auto& [name, value] : constants) s.add_constant(name, value);
  return s;
}

SecondOrderScalarLaw SecondOrderScalarLaw::from_expression(int dim, const std::string& text,
                                                           const std::map<std::string, double>& constants) {
  Expr e = Expr::parse(text, symbols(dim, constants));
  SecondOrderScalarLaw law(dim, text);
  law.f0_ = [e](std::span<const double> v) { return e.eval<double>(v); };
  law.f1_ = [e](std::span<const D1> v) { return e.eval<D1>(v); };
  law.f2_ = [e](std::span<const D2> v) { return e.eval<D2>(v); };
  return law;
}

SecondOrderScalarLaw SecondOrderScalarLaw::scaled(double kappa) const {
  SecondOrderScalarLaw law = *this;
  law.text_ = std::to_string(kappa) + "*(" + text_ + ")";
  law.f0_ = [f = f0_, kappa](std::span<const double> v) { return kappa * f(v); };
  law.f1_ = [f = f1_, kappa](std::span<const D1> v) { return kappa * f(v); };
  law.f2_ = [f = f2_, kappa](std::span<const D2> v) { return kappa * f(v); };
  return law;
}

SecondOrderScalarLaw fixed_heat_law(double alpha) {
  return SecondOrderScalarLaw::from_expression(2, "u_0 - alpha*u_11", {{"alpha", alpha}});
}

SecondOrderScalarLaw intrinsic_heat_law(double alpha) {
  return SecondOrderScalarLaw::from_expression(
      2, "u_0 - u_1*x_1_0/x_1_1 - alpha/x_1_1^3*(x_1_1*u_11 - x_1_11*u_1)", {{"alpha", alpha}});
}

SecondOrderScalarLaw laplace_law(int dim) {
  std::string text;
  for (int i = 1; i < dim; ++i) text += (i > 1 ? " + u_" : "u_") + std::to_string(i) + std::to_string(i);
  return SecondOrderScalarLaw::from_expression(dim, text);
}

}  // namespace cflow
