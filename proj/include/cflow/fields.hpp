#pragma once

// Scalar and vector fields over space-time labels, sampled grids with
// finite-difference derivatives, and flow maps generated by integrating
// particle trajectories through a velocity field.

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cflow/expr.hpp"
#include "cflow/geometry.hpp"
#include "cflow/jet.hpp"

namespace cflow {

class ScalarSource {
 public:
  virtual ~ScalarSource() = default;
  virtual int dim() const = 0;
  virtual bool analytic() const { return true; }
  virtual int max_order() const { return 3; }
  virtual Jet jet(const Point& p, int order) const = 0;
};

template <class F>
class FunctorScalarSource final : public ScalarSource {
 public:
  FunctorScalarSource(int dim, F f) : dim_(dim), f_(std::move(f)) {}
  int dim() const override { return dim_; }
  Jet jet(const Point& p, int order) const override { return functor_jet(f_, p, order); }

 private:
  int dim_;
  F f_;
};

class ScalarField {
 public:
  ScalarField() = default;
  explicit ScalarField(std::shared_ptr<const ScalarSource> src);

  int dim() const { return src_->dim(); }
  bool analytic() const { return src_->analytic(); }
  int max_order() const { return src_->max_order(); }

  /// Value and derivatives up to `order`; throws NonFiniteError on NaN/Inf.
  Jet jet(const Point& p, int order) const;
  double value(const Point& p) const { return jet(p, 0).v; }
  double deriv1(const Point& p, int mu) const { return jet(p, 1).g[mu]; }
  double deriv2(const Point& p, int mu, int nu) const { return jet(p, 2).h[mu][nu]; }

  const std::shared_ptr<const ScalarSource>& source() const { return src_; }

 private:
  std::shared_ptr<const ScalarSource> src_;
};

/// u^j(sigma), j = 1..N, all over the same domain.
class VectorField {
 public:
  VectorField() = default;
  explicit VectorField(std::vector<ScalarField> comps);
  VectorField(std::initializer_list<ScalarField> comps) : VectorField(std::vector<ScalarField>(comps)) {}

  int size() const { return static_cast<int>(comps_.size()); }
  int dim() const { return comps_.front().dim(); }
  const ScalarField& operator[](int j) const { return comps_[j]; }
  const std::vector<ScalarField>& components() const { return comps_; }

 private:
  std::vector<ScalarField> comps_;
};

/// Partial derivative of order <= 2 (<= 3 for analytic fields); `idx` lists axes.
double field_derivative(const ScalarField& f, const Point& p, std::span<const int> idx);

template <class F>
ScalarField analytic_field(int dim, F f) {
  return ScalarField(std::make_shared<FunctorScalarSource<F>>(dim, std::move(f)));
}

ScalarField expression_field(int dim, const std::string& text);
ScalarField expression_field(int dim, Expr e);
ScalarField constant_field(int dim, double c);
/// sum_i c_i f_i
ScalarField linear_combination(std::vector<std::pair<double, ScalarField>> terms);

/// u(sigma) = U(x(sigma)): a Cartesian functor U(span<const T> x) -> T pulled
/// back through a flow, differentiated exactly through the flow's jet.
template <class F>
ScalarField pullback_field(F cartesian, FlowMap flow);

// --- grids and sampled data ------------------------------------------------------

struct Axis {
  double lo = 0.0;
  double hi = 1.0;
  int nodes = 2;

  double spacing() const { return (hi - lo) / (nodes - 1); }
  double node(int i) const { return lo + i * spacing(); }
};

class Grid {
 public:
  Grid() = default;
  explicit Grid(std::vector<Axis> axes);

  int rank() const { return static_cast<int>(axes_.size()); }
  const Axis& axis(int a) const { return axes_[a]; }
  const std::vector<Axis>& axes() const { return axes_; }
  std::size_t size() const;
  /// Multi-index of the flat node number, axis 0 slowest.
  std::vector<int> unflatten(std::size_t k) const;
  std::size_t flatten(std::span<const int> idx) const;
  std::vector<double> coords(std::size_t k) const;

 private:
  std::vector<Axis> axes_;
};

/// Uniform-grid samples of a field over space-time axes. Derivatives come from
/// central differences of order 2 or 4 (shifted one-sided stencils at the
/// edges), interpolated off-node with tensor-product cubic Lagrange weights.
class SampledField final : public ScalarSource {
 public:
  SampledField(Grid grid, std::vector<double> values, int stencil_order);

  static std::shared_ptr<SampledField> sample(const ScalarField& f, const Grid& grid, int stencil_order);

  int dim() const override { return grid_.rank(); }
  bool analytic() const override { return false; }
  int max_order() const override { return 2; }
  Jet jet(const Point& p, int order) const override;

  const Grid& grid() const { return grid_; }
  const std::vector<double>& values() const { return values_; }
  int stencil_order() const { return order_; }

  /// Header row "s0,...,s{d-1},value" then one node per row.
  void write_csv(std::ostream& os) const;
  static std::shared_ptr<SampledField> read_csv(std::istream& is, int stencil_order);

 private:
  double fd_along(std::span<const int> idx, int axis, int deriv) const;
  double fd_mixed(std::span<const int> idx, int a, int b) const;

  Grid grid_;
  std::vector<double> values_;
  int order_;
  std::vector<double> nodal_;  // per node: value, gradient, Hessian (row-major)
};

/// Flow whose components x^0..x^n are sampled on a common grid; derivatives
/// (up to second order) come from the samples' finite differences.
FlowMap sampled_flow(std::vector<std::shared_ptr<const SampledField>> comps, bool time_identity);

/// Finite-difference weights for the m-th derivative at x0 over arbitrary nodes.
std::vector<double> fd_weights(double x0, std::span<const double> nodes, int m);

// --- trajectory integration --------------------------------------------------------

/// Seeded Brownian offsets B(sigma_node, t): independent Gaussian increments per
/// label node and spatial component, variance scale^2 * dt, piecewise linear in t.
class NoisePath {
 public:
  NoisePath(std::uint64_t seed, const Grid& labels, double t0, double t1, int steps, double scale);

  std::uint64_t seed() const { return seed_; }
  double scale() const { return scale_; }
  /// Offset of component j (0-based spatial) at label node `node`, time t.
  double eval_node(std::size_t node, int j, double t) const;
  /// Offset at the label node nearest to sigma (spatial coordinates only).
  std::vector<double> eval(std::span<const double> sigma, double t) const;

 private:
  std::uint64_t seed_;
  Grid labels_;
  double t0_, dt_;
  int steps_, n_;
  double scale_;
  std::vector<double> b_;  // [node][level][j]
};

struct IntegrationOptions {
  /// Trajectories must stay inside the label box scaled by this factor about its centre.
  double bbox_factor = 10.0;
};

/// Stored trajectories X(sigma_node, t_k) with their velocities; evaluates as a
/// time-identity flow (t, sigma) -> (t, X), cubic Lagrange in sigma and cubic
/// Hermite in t.
class IntegratedFlow final : public MapSource {
 public:
  IntegratedFlow(Grid labels, double t0, double t1, int steps, std::vector<double> x, std::vector<double> v);

  const Grid& labels() const { return labels_; }
  int steps() const { return steps_; }
  /// Stored position of component j at label node `node`, time level k.
  double node_position(std::size_t node, int k, int j) const { return x_[(node * (steps_ + 1) + k) * n_ + j]; }

  int dim() const override { return labels_.rank() + 1; }
  MapJet jet(const Point& p, int order) const override;

  /// Columns t, s1..sn, x1..xn; one row per (node, time level).
  void write_trajectories(std::ostream& os) const;

  template <class T>
  void eval(std::span<const T> s, std::span<T> out) const;

 private:
  Grid labels_;
  double t0_, t1_, dt_;
  int steps_, n_;
  std::vector<double> x_, v_;  // [node][level][j]
};

FlowMap integrate_flow_map(const VectorField& velocity, const Grid& labels, double t0, double t1, int steps,
                           const IntegrationOptions& opts = {});
FlowMap integrate_noisy_flow_map(const VectorField& velocity, const NoisePath& noise, const Grid& labels, double t0,
                                 double t1, int steps, const IntegrationOptions& opts = {});

// --- template definitions -----------------------------------------------------------

namespace detail {

template <class F>
class PullbackSource final : public ScalarSource {
 public:
  PullbackSource(F f, FlowMap flow) : f_(std::move(f)), flow_(std::move(flow)) {}
  int dim() const override { return flow_.dim(); }
  int max_order() const override { return flow_.max_order(); }
  Jet jet(const Point& p, int order) const override {
    const MapJet x = flow_.jet(p, order);
    auto run = [&]<class T>() {
      std::array<T, kMaxDim> xs{};
      for (int mu = 0; mu < x.dim; ++mu) xs[mu] = to_dual<T>(x.c[mu]);
      Jet j = to_jet<T>(f_(std::span<const T>(xs.data(), x.dim)));
      j.order = order;
      return j;
    };
    switch (order) {
      case 0: return run.template operator()<double>();
      case 1: return run.template operator()<D1>();
      case 2: return run.template operator()<D2>();
      default: return run.template operator()<D3>();
    }
  }

 private:
  F f_;
  FlowMap flow_;
};

}  // namespace detail

template <class F>
ScalarField pullback_field(F cartesian, FlowMap flow) {
  return ScalarField(std::make_shared<detail::PullbackSource<F>>(std::move(cartesian), std::move(flow)));
}

}  // namespace cflow
