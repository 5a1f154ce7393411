#pragma once

// Pointwise differential geometry of a conjugate flow sigma -> x(sigma):
// Jacobian, cofactor, determinant, inverse, metric, Christoffel symbols and
// their first-order perturbations under x -> x + eps * phi.

#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "cflow/expr.hpp"
#include "cflow/jet.hpp"
#include "cflow/tensor.hpp"

namespace cflow {

/// Anything that yields jets of a map from space-time labels to R^components.
class MapSource {
 public:
  virtual ~MapSource() = default;
  virtual int dim() const = 0;
  virtual int components() const { return dim(); }
  /// Highest derivative order available from jet().
  virtual int max_order() const { return 3; }
  virtual MapJet jet(const Point& p, int order) const = 0;
};

template <class F>
class FunctorMapSource final : public MapSource {
 public:
  FunctorMapSource(int dim, int comps, F f) : dim_(dim), comps_(comps), f_(std::move(f)) {}
  int dim() const override { return dim_; }
  int components() const override { return comps_; }
  MapJet jet(const Point& p, int order) const override { return functor_map_jet(f_, comps_, p, order); }

 private:
  int dim_;
  int comps_;
  F f_;
};

/// x^mu(sigma; u) for one realization of u: a space-time diffeomorphism.
class FlowMap {
 public:
  FlowMap() = default;
  FlowMap(std::shared_ptr<const MapSource> src, bool time_identity);

  int dim() const { return src_->dim(); }
  int spatial_dim() const { return dim() - 1; }
  bool time_identity() const { return time_identity_; }
  int max_order() const { return src_->max_order(); }

  /// Jet of every component; throws NonFiniteError on NaN/Inf.
  MapJet jet(const Point& p, int order) const;

  Point eval(const Point& p) const;
  double deriv1(const Point& p, int mu, int nu) const;
  double deriv2(const Point& p, int mu, int nu, int la) const;

  const std::shared_ptr<const MapSource>& source() const { return src_; }

 private:
  std::shared_ptr<const MapSource> src_;
  bool time_identity_ = false;
};

/// phi^mu(sigma), a first-order displacement of a flow. No invertibility implied.
class FlowPerturbation {
 public:
  FlowPerturbation() = default;
  explicit FlowPerturbation(std::shared_ptr<const MapSource> src) : src_(std::move(src)) {}

  int dim() const { return src_->dim(); }
  MapJet jet(const Point& p, int order) const;
  const std::shared_ptr<const MapSource>& source() const { return src_; }

 private:
  std::shared_ptr<const MapSource> src_;
};

FlowMap identity_flow(int dim);

/// Flow from a generic functor f(span<const T> sigma, span<T> x), evaluated
/// for every dual level to get exact derivatives.
template <class F>
FlowMap analytic_flow(int dim, F f, bool time_identity = false) {
  return FlowMap(std::make_shared<FunctorMapSource<F>>(dim, dim, std::move(f)), time_identity);
}

template <class F>
FlowPerturbation analytic_perturbation(int dim, F f) {
  return FlowPerturbation(std::make_shared<FunctorMapSource<F>>(dim, dim, std::move(f)));
}

/// Flow whose components x^0..x^n are expressions in t/s0..sn.
FlowMap expression_flow(std::vector<Expr> components, bool time_identity);

FlowPerturbation zero_perturbation(int dim);

/// x + eps * phi, jet by jet.
FlowMap perturbed_flow(const FlowMap& flow, const FlowPerturbation& pert, double eps);

/// a * phi + b * psi.
FlowPerturbation combine(double a, const FlowPerturbation& phi, double b, const FlowPerturbation& psi);

struct GeometryBundle {
  int dim = 0;
  Mat<double> jac{};     // J^mu_nu
  Mat<double> cof{};     // C^l_r
  double det = 0.0;      // J
  Mat<double> inv{};     // A^l_r = C^l_r / J
  Mat<double> metric{};  // g_mu_nu
  Tensor3<double> gamma{};  // gamma[a][m][n] = Gamma^a_{mn}
};

struct GeometryPerturbation {
  int dim = 0;
  Mat<double> h{};
  Tensor3<double> dGamma{};            // non-covariant formula
  Tensor3<double> dGamma_covariant{};  // via covariant derivatives of h
  double dJ = 0.0;
  double div_phi = 0.0;
};

// --- operations on a flow at a point ----------------------------------------

Mat<double> jacobian_matrix(const FlowMap& flow, const Point& p);
Mat<double> cofactor_matrix(const FlowMap& flow, const Point& p);
double jacobian_determinant(const FlowMap& flow, const Point& p);
Mat<double> inverse_jacobian(const FlowMap& flow, const Point& p);
Mat<double> metric_tensor(const FlowMap& flow, const Point& p);
Tensor3<double> christoffel_symbols(const FlowMap& flow, const Point& p);
/// dJ/dsigma^mu - J Gamma^nu_{nu mu}, per mu.
Vec<double> check_jacobian_identity(const FlowMap& flow, const Point& p);
GeometryBundle geometry_bundle(const FlowMap& flow, const Point& p);
GeometryPerturbation geometry_perturbation(const FlowMap& flow, const FlowPerturbation& pert, const Point& p);

// --- the same, from precomputed jets -----------------------------------------

Mat<double> jacobian_of(const MapJet& x);
/// Throws DegenerateFlowError if |J| < 1e-12 (or the metric is singular).
GeometryBundle geometry_from_jet(const MapJet& x);
Tensor3<double> christoffel_from_jet(const MapJet& x);
/// Gamma^nu_{nu mu}
Vec<double> contracted_christoffel(const Tensor3<double>& gamma, int dim);
Vec<double> jacobian_identity_residual(const MapJet& x);
GeometryPerturbation perturbation_from_jets(const MapJet& x, const MapJet& phi);

/// A = C/J together with dA^l_m/dsigma^r, obtained by differentiating C/J
/// through a dual number seeded with the flow's second derivatives.
template <class T>
struct InverseJet {
  T det{};
  Mat<T> A{};
  Tensor3<T> dA{};  // dA[l][m][r]
};

template <class T>
InverseJet<T> inverse_with_derivative(const BasicMapJet<T>& x) {
  using DT = Dual<T>;
  const int d = x.dim;
  Mat<DT> jac{};
  for (int m = 0; m < d; ++m)
    for (int n = 0; n < d; ++n) {
      jac[m][n].v = x.d1(m, n);
      for (int r = 0; r < d; ++r) jac[m][n].d[r] = x.d2(m, n, r);
    }
  const Mat<DT> cof = cofactor(jac, d);
  const DT det = determinant_contraction(jac, cof, d);
  if (!(std::abs(primal(det)) >= kDegenerateJacobian)) throw DegenerateFlowError("|J| below 1e-12");
  const DT inv_det = 1.0 / det;
  InverseJet<T> out;
  out.det = det.v;
  for (int l = 0; l < d; ++l)
    for (int m = 0; m < d; ++m) {
      const DT a = cof[l][m] * inv_det;
      out.A[l][m] = a.v;
      for (int r = 0; r < d; ++r) out.dA[l][m][r] = a.d[r];
    }
  return out;
}

}  // namespace cflow
