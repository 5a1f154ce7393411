#include "cflow/quadrature.hpp"

#include <gsl/gsl_integration.h>

#include <memory>
#include <stdexcept>
#include <string>

namespace cflow {

QuadratureSpec QuadratureSpec::box(int dim, int nodes, double lo, double hi) {
  QuadratureSpec s;
  s.axes.assign(dim, QuadratureAxis{lo, hi, nodes, false});
  return s;
}

QuadratureSpec QuadratureSpec::sliced(int axis, double value) const {
  QuadratureSpec s = *this;
  s.axes.at(axis) = QuadratureAxis{value, value, 1, true};
  return s;
}

QuadratureSpec QuadratureSpec::with_nodes(int nodes) const {
  QuadratureSpec s = *this;
  for (auto& a : s.axes)
    if (!a.fixed) a.nodes = nodes;
  s.lambda_nodes = nodes;
  return s;
}

void QuadratureSpec::validate() const {
  if (axes.size() < 2 || axes.size() > kMaxDim) throw std::invalid_argument("quadrature: expected 2..4 axes");
  for (std::size_t i = 0; i < axes.size(); ++i) {
    const auto& a = axes[i];
    if (a.fixed) continue;
    if (a.nodes < 2) throw std::invalid_argument("quadrature: axis " + std::to_string(i) + " needs at least 2 nodes");
    if (!(a.hi > a.lo)) throw std::invalid_argument("quadrature: axis " + std::to_string(i) + " has an empty interval");
  }
  if (lambda_nodes < 2) throw std::invalid_argument("quadrature: lambda needs at least 2 nodes");
}

QuadratureRule gauss_legendre(int nodes, double lo, double hi) {
  if (nodes < 1) throw std::invalid_argument("quadrature: node count must be positive");
  std::unique_ptr<gsl_integration_glfixed_table, decltype(&gsl_integration_glfixed_table_free)> t(
      gsl_integration_glfixed_table_alloc(nodes), &gsl_integration_glfixed_table_free);
  if (!t) throw std::runtime_error("quadrature: table allocation failed");
  QuadratureRule r;
  r.x.resize(nodes);
  r.w.resize(nodes);
  for (int i = 0; i < nodes; ++i) gsl_integration_glfixed_point(lo, hi, i, &r.x[i], &r.w[i], t.get());
  return r;
}

QuadratureGrid quadrature_grid(const QuadratureSpec& spec) {
  spec.validate();
  const int d = spec.dim();
  std::vector<QuadratureRule> rules;
  for (const auto& a : spec.axes) rules.push_back(a.fixed ? QuadratureRule{{a.lo}, {1.0}} : gauss_legendre(a.nodes, a.lo, a.hi));

  QuadratureGrid g;
  std::array<int, kMaxDim> idx{};
  std::array<double, kMaxDim> c{};
  while (true) {
    double w = 1.0;
    for (int i = 0; i < d; ++i) {
      c[i] = rules[i].x[idx[i]];
      w *= rules[i].w[idx[i]];
    }
    g.points.emplace_back(std::span<const double>(c.data(), d));
    g.weights.push_back(w);
    int k = d - 1;
    while (k >= 0 && ++idx[k] == static_cast<int>(rules[k].x.size())) idx[k--] = 0;
    if (k < 0) break;
  }
  return g;
}

double integrate(const QuadratureSpec& spec, const std::function<double(const Point&)>& f) {
  const QuadratureGrid g = quadrature_grid(spec);
  double s = 0.0;
  for (std::size_t i = 0; i < g.points.size(); ++i) s += g.weights[i] * f(g.points[i]);
  return s;
}

}  // namespace cflow
