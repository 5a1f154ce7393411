#include "cflow/variational.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cflow/errors.hpp"
#include "json.hpp"

namespace cflow {

namespace {

double jet_magnitude(const Jet& j, int d) {
  double m = std::abs(j.v);
  for (int i = 0; i < d; ++i) {
    m = std::max(m, std::abs(j.g[i]));
    for (int k = 0; k < d; ++k) m = std::max(m, std::abs(j.h[i][k]));
  }
  return m;
}

// value + e * dir, carried in dual slot 0
BasicJet<D1> lift(const Jet& value, const Jet* dir) {
  BasicJet<D1> r;
  r.order = value.order;
  auto put = [&](D1& out, double v, double dv) {
    out = D1(v);
    out.d[0] = dv;
  };
  put(r.v, value.v, dir ? dir->v : 0.0);
  for (int i = 0; i < kMaxDim; ++i) {
    put(r.g[i], value.g[i], dir ? dir->g[i] : 0.0);
    for (int k = 0; k < kMaxDim; ++k) put(r.h[i][k], value.h[i][k], dir ? dir->h[i][k] : 0.0);
  }
  return r;
}

BasicMapJet<D1> lift(const MapJet& x, const MapJet* dir) {
  BasicMapJet<D1> r;
  r.dim = x.dim;
  for (int m = 0; m < x.dim; ++m) r.c[m] = lift(x.c[m], dir ? &dir->c[m] : nullptr);
  return r;
}

std::vector<Jet> jets_of(const VectorField& u, const Point& p) {
  std::vector<Jet> j;
  j.reserve(u.size());
  for (int i = 0; i < u.size(); ++i) j.push_back(u[i].jet(p, 2));
  return j;
}

void check_shapes(const IntrinsicOperator& op, const VectorField& u, const FlowMap& flow) {
  if (u.size() != op.fields())
    throw std::invalid_argument(op.name() + ": expected " + std::to_string(op.fields()) + " field components");
  if (flow.dim() != op.dim()) throw std::invalid_argument(op.name() + ": flow dimension mismatch");
}

std::vector<double> tangent(std::span<const D1> r, const std::string& who) {
  std::vector<double> out(r.size());
  for (std::size_t i = 0; i < r.size(); ++i) {
    out[i] = r[i].d[0];
    if (!std::isfinite(out[i])) throw NonFiniteError(who + ": non-finite derivative");
  }
  return out;
}

VectorField zero_like(const VectorField& u) {
  std::vector<ScalarField> c;
  for (int i = 0; i < u.size(); ++i) c.push_back(constant_field(u[i].dim(), 0.0));
  return VectorField(std::move(c));
}

VectorField combine_fields(const std::vector<std::pair<double, const VectorField*>>& terms) {
  const int n = terms.front().second->size();
  std::vector<ScalarField> out;
  for (int i = 0; i < n; ++i) {
    std::vector<std::pair<double, ScalarField>> t;
    for (const auto& [c, f] : terms) t.emplace_back(c, (*f)[i]);
    out.push_back(linear_combination(std::move(t)));
  }
  return VectorField(std::move(out));
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("advective form: component counts differ");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double positive_jacobian(const MapJet& x) {
  const double J = geometry_from_jet(x).det;
  if (!(J > 0.0)) throw DegenerateFlowError("advective form: Jacobian determinant is not positive");
  return J;
}

}  // namespace

std::vector<double> gateaux_field_derivative(const IntrinsicOperator& op, const VectorField& u, const FlowMap& flow,
                                             const VectorField& phi, const Point& p, GateauxMode mode) {
  check_shapes(op, u, flow);
  if (phi.size() != u.size()) throw std::invalid_argument("Gateaux derivative: direction has the wrong size");
  const std::vector<Jet> uj = jets_of(u, p), pj = jets_of(phi, p);
  const MapJet x = flow.jet(p, 2);

  if (mode == GateauxMode::exact) {
    std::vector<BasicJet<D1>> lu;
    for (std::size_t i = 0; i < uj.size(); ++i) lu.push_back(lift(uj[i], &pj[i]));
    std::vector<D1> r(op.equations());
    op.eval(lu, lift(x, nullptr), p, r);
    return tangent(r, op.name());
  }

  double um = 1.0, pm = 0.0;
  for (std::size_t i = 0; i < uj.size(); ++i) {
    um = std::max(um, jet_magnitude(uj[i], x.dim));
    pm = std::max(pm, jet_magnitude(pj[i], x.dim));
  }
  std::vector<double> out(op.equations(), 0.0);
  if (pm == 0.0) return out;
  const double eps = 1e-6 * um / pm;
  std::vector<Jet> up(uj), dn(uj);
  for (std::size_t i = 0; i < uj.size(); ++i) {
    up[i] = axpy(eps, pj[i], uj[i]);
    dn[i] = axpy(-eps, pj[i], uj[i]);
  }
  std::vector<double> rp(out.size()), rm(out.size());
  op.eval(up, x, p, rp);
  op.eval(dn, x, p, rm);
  for (std::size_t k = 0; k < out.size(); ++k) {
    out[k] = (rp[k] - rm[k]) / (2 * eps);
    if (!std::isfinite(out[k])) throw NonFiniteError(op.name() + ": non-finite derivative");
  }
  return out;
}

std::vector<double> gateaux_flow_derivative(const IntrinsicOperator& op, const VectorField& u, const FlowMap& flow,
                                            const FlowPerturbation& phi_hat, const Point& p, GateauxMode mode) {
  check_shapes(op, u, flow);
  if (phi_hat.dim() != flow.dim()) throw std::invalid_argument("Gateaux derivative: flow perturbation dimension mismatch");
  const std::vector<Jet> uj = jets_of(u, p);
  const MapJet x = flow.jet(p, 2), ph = phi_hat.jet(p, 2);

  if (mode == GateauxMode::exact) {
    std::vector<BasicJet<D1>> lu;
    for (const auto& j : uj) lu.push_back(lift(j, nullptr));
    std::vector<D1> r(op.equations());
    op.eval(lu, lift(x, &ph), p, r);
    return tangent(r, op.name());
  }

  double xm = 1.0, pm = 0.0;
  for (int m = 0; m < x.dim; ++m) {
    xm = std::max(xm, jet_magnitude(x.c[m], x.dim));
    pm = std::max(pm, jet_magnitude(ph.c[m], x.dim));
  }
  std::vector<double> out(op.equations(), 0.0);
  if (pm == 0.0) return out;
  const double eps = 1e-6 * xm / pm;
  MapJet up = x, dn = x;
  for (int m = 0; m < x.dim; ++m) {
    up.c[m] = axpy(eps, ph.c[m], x.c[m]);
    dn.c[m] = axpy(-eps, ph.c[m], x.c[m]);
  }
  std::vector<double> rp(out.size()), rm(out.size());
  op.eval(uj, up, p, rp);
  op.eval(uj, dn, p, rm);
  for (std::size_t k = 0; k < out.size(); ++k) {
    out[k] = (rp[k] - rm[k]) / (2 * eps);
    if (!std::isfinite(out[k])) throw NonFiniteError(op.name() + ": non-finite derivative");
  }
  return out;
}

PointwiseValue pointwise(const VectorField& f) {
  return [f](const Point& p) {
    std::vector<double> v(f.size());
    for (int i = 0; i < f.size(); ++i) v[i] = f[i].value(p);
    return v;
  };
}

PointwiseValue pointwise(const ScalarField& f) {
  return [f](const Point& p) { return std::vector<double>{f.value(p)}; };
}

double perturbation_divergence(const MapJet& x, const MapJet& phi) {
  const Mat<double> A = geometry_from_jet(x).inv;
  double s = 0.0;
  for (int m = 0; m < x.dim; ++m)
    for (int n = 0; n < x.dim; ++n) s += phi.d1(m, n) * A[n][m];
  return s;
}

double advective_form(const PointwiseValue& a, const PointwiseValue& b, const FlowMap& flow, const QuadratureSpec& quad) {
  if (quad.dim() != flow.dim()) throw std::invalid_argument("advective form: quadrature and flow dimensions differ");
  return integrate(quad, [&](const Point& p) { return dot(a(p), b(p)) * positive_jacobian(flow.jet(p, 1)); });
}

double advective_form(const VectorField& a, const VectorField& b, const FlowMap& flow, const QuadratureSpec& quad) {
  return advective_form(pointwise(a), pointwise(b), flow, quad);
}

double advective_form(const ScalarField& a, const ScalarField& b, const FlowMap& flow, const QuadratureSpec& quad) {
  return advective_form(pointwise(a), pointwise(b), flow, quad);
}

double advective_norm(const PointwiseValue& a, const FlowMap& flow, const QuadratureSpec& quad) {
  return std::sqrt(advective_form(a, a, flow, quad));
}

double advective_form_variation(const PointwiseValue& a, const PointwiseValue& b, const FlowPerturbation& phi_hat,
                                const FlowMap& flow, const QuadratureSpec& quad) {
  if (quad.dim() != flow.dim()) throw std::invalid_argument("advective form: quadrature and flow dimensions differ");
  return integrate(quad, [&](const Point& p) {
    const MapJet x = flow.jet(p, 1);
    return dot(a(p), b(p)) * positive_jacobian(x) * perturbation_divergence(x, phi_hat.jet(p, 1));
  });
}

double advective_form_variation(const PointwiseValue& a, const PointwiseValue& b, const VectorField& u,
                                const VectorField& phi, const FlowLink& link, const FlowMap& flow,
                                const QuadratureSpec& quad) {
  return advective_form_variation(a, b, link.forward(u, phi), flow, quad);
}

// --- homotopies and actions -------------------------------------------------------------

Homotopy Homotopy::straight_line(VectorField u0, VectorField u1) {
  if (u0.size() != u1.size()) throw std::invalid_argument("homotopy: endpoints differ in size");
  Homotopy h;
  h.u0_ = std::move(u0);
  h.u1_ = std::move(u1);
  return h;
}

Homotopy Homotopy::quadratic_detour(VectorField u0, VectorField u1, VectorField w) {
  if (w.size() != u0.size()) throw std::invalid_argument("homotopy: detour differs in size");
  Homotopy h = straight_line(std::move(u0), std::move(u1));
  h.w_ = std::move(w);
  h.detour_ = true;
  return h;
}

VectorField Homotopy::eval(double l) const {
  if (!detour_) return combine_fields({{1.0 - l, &u0_}, {l, &u1_}});
  return combine_fields({{1.0 - l, &u0_}, {l, &u1_}, {l * (1.0 - l), &w_}});
}

VectorField Homotopy::deriv(double l) const {
  if (!detour_) return combine_fields({{-1.0, &u0_}, {1.0, &u1_}});
  return combine_fields({{-1.0, &u0_}, {1.0, &u1_}, {1.0 - 2.0 * l, &w_}});
}

double path_integral(const IntrinsicOperator& op, const FlowOf& flow_of, const Homotopy& path,
                     const QuadratureSpec& quad) {
  quad.validate();
  const QuadratureRule rule = gauss_legendre(quad.lambda_nodes, 0.0, 1.0);
  double s = 0.0;
  for (std::size_t k = 0; k < rule.x.size(); ++k) {
    const VectorField ul = path.eval(rule.x[k]);
    const FlowMap flow = flow_of(ul);
    const PointwiseValue n = [&](const Point& p) { return op.residual(ul, flow, p); };
    s += rule.w[k] * advective_form(n, pointwise(path.deriv(rule.x[k])), flow, quad);
  }
  return s;
}

double build_action(const IntrinsicOperator& op, const FlowOf& flow_of, const VectorField& u0, const VectorField& u,
                    const QuadratureSpec& quad) {
  return path_integral(op, flow_of, Homotopy::straight_line(u0, u), quad);
}

StationarityResult stationarity_check(const IntrinsicOperator& op, const FlowOf& flow_of, const VectorField& u,
                                      const std::vector<VectorField>& directions, const QuadratureSpec& quad) {
  const VectorField zero = zero_like(u);
  const FlowMap flow = flow_of(u);
  const PointwiseValue n = [&](const Point& p) { return op.residual(u, flow, p); };
  const double un = advective_norm(pointwise(u), flow, quad);
  StationarityResult res;
  for (const auto& du : directions) {
    const double dn = advective_norm(pointwise(du), flow, quad);
    if (!(dn > 0.0)) throw std::invalid_argument("stationarity: zero direction");
    const double eps = 1e-4 * std::max(1.0, un) / dn;
    const VectorField up = combine_fields({{1.0, &u}, {eps, &du}});
    const VectorField dnf = combine_fields({{1.0, &u}, {-eps, &du}});
    const double fd = (build_action(op, flow_of, zero, up, quad) - build_action(op, flow_of, zero, dnf, quad)) / (2 * eps);
    const double d = std::abs(fd - advective_form(n, pointwise(du), flow, quad));
    res.defects.push_back(d);
    res.steps.push_back(eps);
    res.max_defect = std::max(res.max_defect, d);
  }
  return res;
}

// --- symmetry ----------------------------------------------------------------------------

std::string to_string(SymmetryVariant v) {
  switch (v) {
    case SymmetryVariant::full: return "full";
    case SymmetryVariant::incompressible: return "incompressible";
    case SymmetryVariant::fixed_flow: return "fixed-flow";
    case SymmetryVariant::classical: return "classical";
  }
  return "?";
}

SymmetryVariant parse_symmetry_variant(const std::string& s) {
  for (auto v : {SymmetryVariant::full, SymmetryVariant::incompressible, SymmetryVariant::fixed_flow,
                 SymmetryVariant::classical})
    if (to_string(v) == s) return v;
  throw std::invalid_argument("unknown symmetry variant '" + s + "'");
}

std::string SymmetryReport::to_json() const {
  nlohmann::ordered_json j;
  j["variant"] = to_string(variant);
  j["defect"] = defect;
  j["lhs"] = lhs;
  j["rhs"] = rhs;
  j["normalization"] = normalization;
  return j.dump();
}

PointwiseValue linearized_operator(const IntrinsicOperator& op, const FlowLink& link, const VectorField& u,
                                   const FlowMap& flow, const VectorField& phi) {
  const FlowPerturbation ph = link.forward(u, phi);
  return [&op, u, flow, phi, ph](const Point& p) {
    std::vector<double> g = gateaux_field_derivative(op, u, flow, phi, p);
    const std::vector<double> f = gateaux_flow_derivative(op, u, flow, ph, p);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += f[i];
    return g;
  };
}

SymmetryReport symmetry_defect(const IntrinsicOperator& op, const FlowLink& link, const VectorField& u,
                               const FlowMap& flow, const VectorField& phi, const VectorField& psi,
                               SymmetryVariant variant, const QuadratureSpec& quad) {
  if (op.equations() != op.fields())
    throw std::invalid_argument("symmetry: residual and field components must pair up");
  const bool flow_term = variant == SymmetryVariant::full || variant == SymmetryVariant::incompressible;
  const bool form_term = variant == SymmetryVariant::full || variant == SymmetryVariant::fixed_flow;

  auto G = [&](const VectorField& f) -> PointwiseValue {
    if (flow_term) return linearized_operator(op, link, u, flow, f);
    return [&op, u, flow, f](const Point& p) { return gateaux_field_derivative(op, u, flow, f, p); };
  };
  const PointwiseValue n = [&](const Point& p) { return op.residual(u, flow, p); };
  const PointwiseValue pphi = pointwise(phi), ppsi = pointwise(psi);

  SymmetryReport r;
  r.variant = variant;
  r.lhs = advective_form(G(phi), ppsi, flow, quad);
  r.rhs = advective_form(G(psi), pphi, flow, quad);
  if (form_term) {
    r.lhs += advective_form_variation(n, ppsi, link.forward(u, phi), flow, quad);
    r.rhs += advective_form_variation(n, pphi, link.forward(u, psi), flow, quad);
  }
  r.normalization = advective_norm(pphi, flow, quad) * advective_norm(ppsi, flow, quad);
  if (!(r.normalization > 0.0)) throw std::invalid_argument("symmetry: probes must be nonzero");
  r.lhs /= r.normalization;
  r.rhs /= r.normalization;
  r.defect = r.lhs - r.rhs;
  return r;
}

}  // namespace cflow
