#pragma once

// Cartesian derivatives pushed through a flow, concrete intrinsic-coordinate
// residuals (heat, Navier-Stokes, generic second-order scalar laws) and the
// operator/link abstraction used by the variational machinery.

#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "cflow/ansatz.hpp"
#include "cflow/fields.hpp"
#include "cflow/geometry.hpp"
#include "cflow/law.hpp"

namespace cflow {

// --- pushforward of derivatives --------------------------------------------------

/// dU/dx^mu = u_nu A^nu_mu
template <class T>
Vec<T> pushforward_gradient(const BasicJet<T>& u, const InverseJet<T>& inv, int d) {
  Vec<T> g{};
  for (int mu = 0; mu < d; ++mu)
    for (int nu = 0; nu < d; ++nu) g[mu] = g[mu] + u.g[nu] * inv.A[nu][mu];
  return g;
}

/// d2U/dx^mu dx^nu = u_lr A^r_nu A^l_mu + u_l dA^l_mu/dsigma^r A^r_nu
template <class T>
Mat<T> pushforward_hessian(const BasicJet<T>& u, const InverseJet<T>& inv, int d) {
  Mat<T> h{};
  for (int mu = 0; mu < d; ++mu)
    for (int nu = 0; nu < d; ++nu) {
      T s(0.0);
      for (int l = 0; l < d; ++l)
        for (int r = 0; r < d; ++r) s = s + (u.h[l][r] * inv.A[l][mu] + u.g[l] * inv.dA[l][mu][r]) * inv.A[r][nu];
      h[mu][nu] = s;
    }
  return h;
}

Vec<double> pushforward_gradient(const ScalarField& u, const FlowMap& flow, const Point& p);
Mat<double> pushforward_hessian(const ScalarField& u, const FlowMap& flow, const Point& p);

// --- concrete laws ---------------------------------------------------------------

/// The 1+1D heat law written out for a time-identity flow, term by term.
template <class T>
T heat_residual_literal(const BasicJet<T>& u, const BasicMapJet<T>& x, double alpha) {
  if (x.dim != 2) throw std::invalid_argument("heat law: needs one spatial dimension");
  if (std::abs(primal(x.d1(0, 0)) - 1.0) > 1e-12 || std::abs(primal(x.d1(0, 1))) > 1e-12)
    throw std::invalid_argument("heat law: the flow must leave time untransformed");
  const T& xs = x.d1(1, 1);
  const T& xt = x.d1(1, 0);
  const T& xss = x.d2(1, 1, 1);
  if (!(primal(xs) > kDegenerateJacobian)) throw DegenerateFlowError("heat law: dx/dsigma <= 1e-12");
  return u.g[0] - u.g[1] * xt / xs - alpha / (xs * xs * xs) * (xs * u.h[1][1] - xss * u.g[1]);
}

double heat_residual(const ScalarField& u, const FlowMap& flow, double alpha, const Point& p);
/// U_t - alpha U_xx assembled from the pushforward gradient and Hessian.
double heat_residual_pushforward(const ScalarField& u, const FlowMap& flow, double alpha, const Point& p);

/// Momentum residual per component followed by the continuity residual; `u`
/// holds the n velocity components and `pres` the pressure.
template <class T>
void navier_stokes_literal(std::span<const BasicJet<T>> u, const BasicJet<T>& pres, const BasicMapJet<T>& x, double re,
                           std::span<T> out) {
  const int d = x.dim;
  const int n = d - 1;
  const InverseJet<T> inv = inverse_with_derivative(x);
  T div(0.0);
  for (int j = 0; j < n; ++j) {
    const BasicJet<T>& uj = u[j];
    T lhs(0.0), rhs(0.0);
    for (int nu = 0; nu < d; ++nu) {
      lhs = lhs + uj.g[nu] * inv.A[nu][0];
      for (int k = 1; k <= n; ++k) lhs = lhs + u[k - 1].v * uj.g[nu] * inv.A[nu][k];
      rhs = rhs - pres.g[nu] * inv.A[nu][j + 1];
    }
    T visc(0.0);
    for (int k = 1; k <= n; ++k)
      for (int l = 0; l < d; ++l)
        for (int r = 0; r < d; ++r)
          visc = visc + (uj.h[l][r] * inv.A[l][k] + uj.g[l] * inv.dA[l][k][r]) * inv.A[r][k];
    out[j] = lhs - rhs - visc / re;
    for (int nu = 0; nu < d; ++nu) div = div + uj.g[nu] * inv.A[nu][j + 1];
  }
  out[n] = div;
}

std::vector<double> navier_stokes_residual(const VectorField& u, const ScalarField& pres, const FlowMap& flow,
                                           double re, const Point& p);

// --- functional links ---------------------------------------------------------------

/// How the flow depends on the solution: the realized flow for a given u, and
/// the first-order flow perturbation induced by a field perturbation.
struct FlowLink {
  std::string kind = "identity";
  std::function<FlowMap(const VectorField& u)> flow_of;
  std::function<FlowPerturbation(const VectorField& u, const VectorField& phi)> forward;
  /// Flow perturbation -> field perturbation. Declared for completeness; no
  /// built-in link provides it.
  std::function<VectorField(const VectorField& u, const FlowPerturbation& phi_hat)> backward;
  std::shared_ptr<const AlgebraicFlowAnsatz> algebraic;
};

FlowLink identity_link(int dim);
/// A flow that does not depend on u.
FlowLink fixed_link(FlowMap flow);
/// x(sigma; u) = ansatz(sigma, u(sigma)); phi_hat = (dx/du) phi.
FlowLink algebraic_link(AlgebraicFlowAnsatz ansatz);

// --- operators -----------------------------------------------------------------------

class IntrinsicOperator {
 public:
  virtual ~IntrinsicOperator() = default;

  virtual std::string name() const = 0;
  virtual int dim() const = 0;
  /// Number of field components the residual reads.
  virtual int fields() const = 0;
  /// Number of residual components.
  virtual int equations() const = 0;

  virtual void eval(std::span<const Jet> u, const MapJet& x, const Point& p, std::span<double> out) const = 0;
  virtual void eval(std::span<const BasicJet<D1>> u, const BasicMapJet<D1>& x, const Point& p,
                    std::span<D1> out) const = 0;

  std::vector<double> residual(const VectorField& u, const FlowMap& flow, const Point& p) const;
  double residual(const ScalarField& u, const FlowMap& flow, const Point& p) const;

  const std::map<std::string, double>& params() const { return params_; }
  const FlowLink& link() const { return link_; }
  void set_link(FlowLink link) { link_ = std::move(link); }

 protected:
  std::map<std::string, double> params_;
  FlowLink link_;
};

template <class Derived>
class IntrinsicLaw : public IntrinsicOperator {
 public:
  void eval(std::span<const Jet> u, const MapJet& x, const Point& p, std::span<double> out) const override {
    static_cast<const Derived&>(*this).template apply<double>(u, x, p, out);
  }
  void eval(std::span<const BasicJet<D1>> u, const BasicMapJet<D1>& x, const Point& p,
            std::span<D1> out) const override {
    static_cast<const Derived&>(*this).template apply<D1>(u, x, p, out);
  }
};

class HeatOperator final : public IntrinsicLaw<HeatOperator> {
 public:
  explicit HeatOperator(double alpha);
  std::string name() const override { return "heat"; }
  int dim() const override { return 2; }
  int fields() const override { return 1; }
  int equations() const override { return 1; }

  template <class T>
  void apply(std::span<const BasicJet<T>> u, const BasicMapJet<T>& x, const Point&, std::span<T> out) const {
    out[0] = heat_residual_literal(u[0], x, alpha_);
  }

 private:
  double alpha_;
};

/// Fields: velocity components then pressure. Residuals: momentum then continuity.
class NavierStokesOperator final : public IntrinsicLaw<NavierStokesOperator> {
 public:
  NavierStokesOperator(int spatial_dim, double re);
  std::string name() const override { return "navier_stokes"; }
  int dim() const override { return n_ + 1; }
  int fields() const override { return n_ + 1; }
  int equations() const override { return n_ + 1; }

  template <class T>
  void apply(std::span<const BasicJet<T>> u, const BasicMapJet<T>& x, const Point&, std::span<T> out) const {
    navier_stokes_literal<T>(u.first(n_), u[n_], x, re_, out);
  }

 private:
  int n_;
  double re_;
};

/// Any second-order scalar law f(u; du; d2u; dx; d2x).
class LawOperator final : public IntrinsicLaw<LawOperator> {
 public:
  explicit LawOperator(SecondOrderScalarLaw law, std::string name = "law");
  std::string name() const override { return name_; }
  int dim() const override { return law_.dim(); }
  int fields() const override { return 1; }
  int equations() const override { return 1; }
  const SecondOrderScalarLaw& law() const { return law_; }

  template <class T>
  void apply(std::span<const BasicJet<T>> u, const BasicMapJet<T>& x, const Point& p, std::span<T> out) const {
    out[0] = law_.eval<T>(u[0], x, p);
  }

 private:
  SecondOrderScalarLaw law_;
  std::string name_;
};

}  // namespace cflow
