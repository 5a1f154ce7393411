#include "cflow/intrinsic.hpp"

#include <stdexcept>

#include "cflow/errors.hpp"

namespace cflow {

Vec<double> pushforward_gradient(const ScalarField& u, const FlowMap& flow, const Point& p) {
  const auto inv = inverse_with_derivative(flow.jet(p, 2));
  return pushforward_gradient(u.jet(p, 1), inv, flow.dim());
}

Mat<double> pushforward_hessian(const ScalarField& u, const FlowMap& flow, const Point& p) {
  const auto inv = inverse_with_derivative(flow.jet(p, 2));
  return pushforward_hessian(u.jet(p, 2), inv, flow.dim());
}

double heat_residual(const ScalarField& u, const FlowMap& flow, double alpha, const Point& p) {
  return heat_residual_literal(u.jet(p, 2), flow.jet(p, 2), alpha);
}

double heat_residual_pushforward(const ScalarField& u, const FlowMap& flow, double alpha, const Point& p) {
  if (flow.dim() != 2) throw std::invalid_argument("heat law: needs one spatial dimension");
  const auto inv = inverse_with_derivative(flow.jet(p, 2));
  const Jet uj = u.jet(p, 2);
  return pushforward_gradient(uj, inv, 2)[0] - alpha * pushforward_hessian(uj, inv, 2)[1][1];
}

std::vector<double> navier_stokes_residual(const VectorField& u, const ScalarField& pres, const FlowMap& flow,
                                           double re, const Point& p) {
  const int n = flow.spatial_dim();
  if (n < 2 || n > 3) throw std::invalid_argument("Navier-Stokes: needs 2 or 3 spatial dimensions");
  if (u.size() != n) throw std::invalid_argument("Navier-Stokes: one velocity component per spatial axis");
  std::vector<Jet> uj;
  for (int j = 0; j < n; ++j) uj.push_back(u[j].jet(p, 2));
  std::vector<double> out(n + 1);
  navier_stokes_literal<double>(uj, pres.jet(p, 2), flow.jet(p, 2), re, out);
  return out;
}

// --- links -------------------------------------------------------------------------

FlowLink identity_link(int dim) {
  FlowLink l;
  l.kind = "identity";
  const FlowMap id = identity_flow(dim);
  l.flow_of = [id](const VectorField&) { return id; };
  l.forward = [dim](const VectorField&, const VectorField&) { return zero_perturbation(dim); };
  return l;
}

FlowLink fixed_link(FlowMap flow) {
  FlowLink l;
  l.kind = "fixed";
  const int dim = flow.dim();
  l.flow_of = [flow](const VectorField&) { return flow; };
  l.forward = [dim](const VectorField&, const VectorField&) { return zero_perturbation(dim); };
  return l;
}

FlowLink algebraic_link(AlgebraicFlowAnsatz ansatz) {
  FlowLink l;
  l.kind = "algebraic";
  auto a = std::make_shared<const AlgebraicFlowAnsatz>(std::move(ansatz));
  l.algebraic = a;
  l.flow_of = [a](const VectorField& u) {
    if (u.size() != 1) throw std::invalid_argument("algebraic link: scalar fields only");
    return a->compose(u[0]);
  };
  l.forward = [a](const VectorField& u, const VectorField& phi) {
    if (u.size() != 1 || phi.size() != 1) throw std::invalid_argument("algebraic link: scalar fields only");
    return a->forward(u[0], phi[0]);
  };
  return l;
}

// --- operators -------------------------------------------------------------------------

std::vector<double> IntrinsicOperator::residual(const VectorField& u, const FlowMap& flow, const Point& p) const {
  if (u.size() != fields())
    throw std::invalid_argument(name() + ": expected " + std::to_string(fields()) + " field components");
  if (flow.dim() != dim()) throw std::invalid_argument(name() + ": flow dimension mismatch");
  std::vector<Jet> uj;
  for (int j = 0; j < u.size(); ++j) uj.push_back(u[j].jet(p, 2));
  std::vector<double> out(equations());
  eval(uj, flow.jet(p, 2), p, out);
  for (double v : out)
    if (!std::isfinite(v)) throw NonFiniteError(name() + ": non-finite residual");
  return out;
}

double IntrinsicOperator::residual(const ScalarField& u, const FlowMap& flow, const Point& p) const {
  return residual(VectorField{u}, flow, p).at(0);
}

HeatOperator::HeatOperator(double alpha) : alpha_(alpha) {
  params_["alpha"] = alpha;
  link_ = identity_link(2);
}

NavierStokesOperator::NavierStokesOperator(int spatial_dim, double re) : n_(spatial_dim), re_(re) {
  if (n_ < 2 || n_ > 3) throw std::invalid_argument("Navier-Stokes: needs 2 or 3 spatial dimensions");
  if (!(re > 0.0)) throw std::invalid_argument("Navier-Stokes: Reynolds number must be positive");
  params_["Re"] = re;
  link_ = identity_link(n_ + 1);
}

LawOperator::LawOperator(SecondOrderScalarLaw law, std::string name) : law_(std::move(law)), name_(std::move(name)) {
  link_ = identity_link(law_.dim());
}

}  // namespace cflow
