#pragma once

// Algebraic flows x(sigma; u) that depend pointwise on the value of u, with
// free coefficients theta for fitting.

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cflow/fields.hpp"
#include "cflow/geometry.hpp"

namespace cflow {

class AlgebraicFlowAnsatz {
 public:
  AlgebraicFlowAnsatz() = default;

  /// f(span<const T> sigma, const T& u, span<const double> theta, span<T> x),
  /// instantiated for double and D1..D3.
  template <class F>
  static AlgebraicFlowAnsatz from_functor(int dim, std::vector<double> theta, F f, bool time_identity = false) {
    AlgebraicFlowAnsatz a(dim, std::move(theta), time_identity);
    a.f0_ = f;
    a.f1_ = f;
    a.f2_ = f;
    a.f3_ = f;
    a.text_ = {"<functor>"};
    return a;
  }

  /// One expression per component x^0..x^n over t/x/y/z (or s0..), u and the
  /// parameter names (default th0, th1, ...).
  static AlgebraicFlowAnsatz from_expressions(int dim, const std::vector<std::string>& components,
                                              std::vector<double> theta, std::vector<std::string> param_names = {},
                                              const std::map<std::string, double>& constants = {});

  static AlgebraicFlowAnsatz identity(int dim);

  int dim() const { return dim_; }
  int parameters() const { return static_cast<int>(theta_.size()); }
  const std::vector<double>& theta() const { return theta_; }
  const std::vector<std::string>& param_names() const { return names_; }
  const std::vector<std::string>& text() const { return text_; }
  bool time_identity() const { return time_identity_; }
  AlgebraicFlowAnsatz with_theta(std::vector<double> theta) const;

  template <class T>
  void eval(std::span<const T> s, const T& u, std::span<T> x) const {
    const std::span<const double> th(theta_);
    if constexpr (std::is_same_v<T, double>) f0_(s, u, th, x);
    else if constexpr (std::is_same_v<T, D1>) f1_(s, u, th, x);
    else if constexpr (std::is_same_v<T, D2>) f2_(s, u, th, x);
    else f3_(s, u, th, x);
  }

  /// sigma -> x(sigma, u(sigma)); jets up to third order when u has them.
  FlowMap compose(const ScalarField& u) const;
  /// sigma -> x(sigma, u0) with u held at a constant value.
  FlowMap frozen(double u0) const;
  /// Jets (order <= 2) of a^mu = dx^mu/du evaluated along u.
  MapJet link_jet(const ScalarField& u, const Point& p, int order) const;
  /// phi_hat^mu = a^mu phi.
  FlowPerturbation forward(const ScalarField& u, const ScalarField& phi) const;

 private:
  AlgebraicFlowAnsatz(int dim, std::vector<double> theta, bool time_identity);

  template <class T>
  using Fn = std::function<void(std::span<const T>, const T&, std::span<const double>, std::span<T>)>;

  int dim_ = 0;
  std::vector<double> theta_;
  std::vector<std::string> names_;
  std::vector<std::string> text_;
  bool time_identity_ = false;
  Fn<double> f0_;
  Fn<D1> f1_;
  Fn<D2> f2_;
  Fn<D3> f3_;
};

}  // namespace cflow
