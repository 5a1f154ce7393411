#pragma once

// Tensor-product Gauss-Legendre quadrature over a box of label coordinates.

#include <functional>
#include <vector>

#include "cflow/jet.hpp"

namespace cflow {

struct QuadratureAxis {
  double lo = 0.0;
  double hi = 1.0;
  int nodes = 16;
  /// Hold the coordinate at `lo` instead of integrating over this axis.
  bool fixed = false;
};

struct QuadratureSpec {
  std::vector<QuadratureAxis> axes;
  /// Nodes for integrals over the homotopy parameter.
  int lambda_nodes = 16;

  /// [lo, hi]^dim with the same node count on every axis.
  static QuadratureSpec box(int dim, int nodes, double lo = 0.0, double hi = 1.0);
  /// Copy with `axis` pinned to `value`.
  QuadratureSpec sliced(int axis, double value) const;
  /// Copy with every integrated axis (and lambda) using `nodes` points.
  QuadratureSpec with_nodes(int nodes) const;

  int dim() const { return static_cast<int>(axes.size()); }
  /// Throws std::invalid_argument on fewer than two nodes or an empty interval.
  void validate() const;
};

struct QuadratureRule {
  std::vector<double> x, w;
};

QuadratureRule gauss_legendre(int nodes, double lo, double hi);

/// Points and weights of the full tensor grid, axis 0 slowest.
struct QuadratureGrid {
  std::vector<Point> points;
  std::vector<double> weights;
};
QuadratureGrid quadrature_grid(const QuadratureSpec& spec);

double integrate(const QuadratureSpec& spec, const std::function<double(const Point&)>& f);

}  // namespace cflow
