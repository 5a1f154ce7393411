#include "cflow/geometry.hpp"

#include <cmath>
#include <string>

namespace cflow {

namespace {

class ExprMapSource final : public MapSource {
 public:
  explicit ExprMapSource(std::vector<Expr> comps) : comps_(std::move(comps)) {}
  int dim() const override { return static_cast<int>(comps_.size()); }
  MapJet jet(const Point& p, int order) const override {
    return functor_map_jet(
        [this](auto s, auto out) {
          for (std::size_t mu = 0; mu < comps_.size(); ++mu) out[mu] = comps_[mu].eval(s);
        },
        dim(), p, order);
  }

 private:
  std::vector<Expr> comps_;
};

class ZeroMapSource final : public MapSource {
 public:
  explicit ZeroMapSource(int dim) : dim_(dim) {}
  int dim() const override { return dim_; }
  MapJet jet(const Point&, int order) const override {
    MapJet m;
    m.dim = dim_;
    for (int mu = 0; mu < dim_; ++mu) m.c[mu].order = order;
    return m;
  }

 private:
  int dim_;
};

class LinearComboSource final : public MapSource {
 public:
  LinearComboSource(double a, std::shared_ptr<const MapSource> x, double b, std::shared_ptr<const MapSource> y)
      : a_(a), b_(b), x_(std::move(x)), y_(std::move(y)) {
    if (x_->dim() != y_->dim()) throw std::invalid_argument("combining maps of different dimension");
  }
  int dim() const override { return x_->dim(); }
  int max_order() const override { return std::min(x_->max_order(), y_->max_order()); }
  MapJet jet(const Point& p, int order) const override {
    MapJet jx = x_->jet(p, order);
    const MapJet jy = y_->jet(p, order);
    for (int mu = 0; mu < jx.dim; ++mu) jx.c[mu] = axpy(b_, jy.c[mu], scaled(a_, jx.c[mu]));
    return jx;
  }

 private:
  double a_, b_;
  std::shared_ptr<const MapSource> x_, y_;
};

void check_point(const Point& p, int dim) {
  if (p.size() != dim)
    throw std::invalid_argument("point has " + std::to_string(p.size()) + " coordinates, flow expects " +
                                std::to_string(dim));
}

MapJet checked_jet(const MapSource& src, const Point& p, int order) {
  check_point(p, src.dim());
  if (order > src.max_order())
    throw std::invalid_argument("derivative order " + std::to_string(order) + " not available");
  MapJet m = src.jet(p, order);
  for (int mu = 0; mu < m.dim; ++mu)
    if (!jet_finite(m.c[mu])) throw NonFiniteError("flow derivative is not finite");
  return m;
}

}  // namespace

FlowMap::FlowMap(std::shared_ptr<const MapSource> src, bool time_identity)
    : src_(std::move(src)), time_identity_(time_identity) {
  if (!src_) throw std::invalid_argument("FlowMap: null source");
  if (src_->dim() < 2 || src_->dim() > kMaxDim) throw std::invalid_argument("FlowMap: n must be 1, 2 or 3");
  if (src_->components() != src_->dim()) throw std::invalid_argument("FlowMap: must map R^{n+1} to itself");
}

MapJet FlowMap::jet(const Point& p, int order) const { return checked_jet(*src_, p, order); }

Point FlowMap::eval(const Point& p) const {
  const MapJet m = jet(p, 0);
  std::array<double, kMaxDim> c{};
  for (int mu = 0; mu < m.dim; ++mu) c[mu] = m.c[mu].v;
  return Point(std::span<const double>(c.data(), m.dim));
}

double FlowMap::deriv1(const Point& p, int mu, int nu) const { return jet(p, 1).d1(mu, nu); }

double FlowMap::deriv2(const Point& p, int mu, int nu, int la) const { return jet(p, 2).d2(mu, nu, la); }

MapJet FlowPerturbation::jet(const Point& p, int order) const { return checked_jet(*src_, p, order); }

FlowMap identity_flow(int dim) {
  return analytic_flow(
      dim,
      [](auto s, auto out) {
        for (std::size_t i = 0; i < s.size(); ++i) out[i] = s[i];
      },
      true);
}

FlowMap expression_flow(std::vector<Expr> components, bool time_identity) {
  return FlowMap(std::make_shared<ExprMapSource>(std::move(components)), time_identity);
}

FlowPerturbation zero_perturbation(int dim) { return FlowPerturbation(std::make_shared<ZeroMapSource>(dim)); }

FlowMap perturbed_flow(const FlowMap& flow, const FlowPerturbation& pert, double eps) {
  return FlowMap(std::make_shared<LinearComboSource>(1.0, flow.source(), eps, pert.source()), false);
}

FlowPerturbation combine(double a, const FlowPerturbation& phi, double b, const FlowPerturbation& psi) {
  return FlowPerturbation(std::make_shared<LinearComboSource>(a, phi.source(), b, psi.source()));
}

// --- jet-level kernels ---------------------------------------------------------

Mat<double> jacobian_of(const MapJet& x) {
  Mat<double> j{};
  for (int m = 0; m < x.dim; ++m)
    for (int n = 0; n < x.dim; ++n) j[m][n] = x.d1(m, n);
  return j;
}

namespace {

Mat<double> metric_of(const Mat<double>& jac, int d) {
  Mat<double> g{};
  for (int m = 0; m < d; ++m)
    for (int n = 0; n < d; ++n) {
      double s = 0.0;
      for (int b = 0; b < d; ++b) s += jac[b][m] * jac[b][n];
      g[m][n] = s;
    }
  return g;
}

// dg[m][n][l] = d g_mn / d sigma^l from the flow's second derivatives.
Tensor3<double> metric_derivative(const MapJet& x) {
  const int d = x.dim;
  Tensor3<double> dg{};
  for (int m = 0; m < d; ++m)
    for (int n = 0; n < d; ++n)
      for (int l = 0; l < d; ++l) {
        double s = 0.0;
        for (int b = 0; b < d; ++b) s += x.d2(b, m, l) * x.d1(b, n) + x.d1(b, m) * x.d2(b, n, l);
        dg[m][n][l] = s;
      }
  return dg;
}

// Gamma^a_mn = 1/2 g^{ar} (d_n g_rm + d_m g_rn - d_r g_mn)
Tensor3<double> christoffel_from_metric(const Mat<double>& ginv, const Tensor3<double>& dg, int d) {
  Tensor3<double> gam{};
  for (int a = 0; a < d; ++a)
    for (int m = 0; m < d; ++m)
      for (int n = 0; n < d; ++n) {
        double s = 0.0;
        for (int r = 0; r < d; ++r) s += ginv[a][r] * (dg[r][m][n] + dg[r][n][m] - dg[m][n][r]);
        gam[a][m][n] = 0.5 * s;
      }
  return gam;
}

Mat<double> metric_inverse(const Mat<double>& g, int d) {
  try {
    return inverse_small(g, d);
  } catch (const DegenerateFlowError&) {
    throw DegenerateFlowError("metric tensor is not invertible");
  }
}

}  // namespace

Tensor3<double> christoffel_from_jet(const MapJet& x) {
  const int d = x.dim;
  const Mat<double> g = metric_of(jacobian_of(x), d);
  return christoffel_from_metric(metric_inverse(g, d), metric_derivative(x), d);
}

Vec<double> contracted_christoffel(const Tensor3<double>& gamma, int dim) {
  Vec<double> c{};
  for (int m = 0; m < dim; ++m)
    for (int n = 0; n < dim; ++n) c[m] += gamma[n][n][m];
  return c;
}

GeometryBundle geometry_from_jet(const MapJet& x) {
  const int d = x.dim;
  GeometryBundle gb;
  gb.dim = d;
  gb.jac = jacobian_of(x);
  gb.cof = cofactor(gb.jac, d);
  gb.det = determinant_contraction(gb.jac, gb.cof, d);
  if (!(std::abs(gb.det) >= kDegenerateJacobian)) throw DegenerateFlowError("|J| below 1e-12");
  for (int l = 0; l < d; ++l)
    for (int r = 0; r < d; ++r) gb.inv[l][r] = gb.cof[l][r] / gb.det;
  gb.metric = metric_of(gb.jac, d);
  if (x.c[0].order >= 2) gb.gamma = christoffel_from_metric(metric_inverse(gb.metric, d), metric_derivative(x), d);
  return gb;
}

Vec<double> jacobian_identity_residual(const MapJet& x) {
  const int d = x.dim;
  // dJ/dsigma by differentiating the Leibniz determinant, independent of the cofactor path.
  Mat<D1> jac{};
  for (int m = 0; m < d; ++m)
    for (int n = 0; n < d; ++n) {
      jac[m][n].v = x.d1(m, n);
      for (int r = 0; r < d; ++r) jac[m][n].d[r] = x.d2(m, n, r);
    }
  const D1 det = determinant_leibniz(jac, d);
  if (!(std::abs(det.v) >= kDegenerateJacobian)) throw DegenerateFlowError("|J| below 1e-12");
  const Vec<double> tr = contracted_christoffel(christoffel_from_jet(x), d);
  Vec<double> res{};
  for (int m = 0; m < d; ++m) res[m] = det.d[m] - det.v * tr[m];
  return res;
}

GeometryPerturbation perturbation_from_jets(const MapJet& x, const MapJet& phi) {
  const int d = x.dim;
  if (phi.dim != d) throw std::invalid_argument("perturbation dimension mismatch");
  const GeometryBundle gb = geometry_from_jet(x);
  const Mat<double> ginv = metric_inverse(gb.metric, d);

  GeometryPerturbation gp;
  gp.dim = d;
  for (int m = 0; m < d; ++m)
    for (int n = 0; n < d; ++n) {
      double s = 0.0;
      for (int b = 0; b < d; ++b) s += phi.d1(b, m) * x.d1(b, n) + x.d1(b, m) * phi.d1(b, n);
      gp.h[m][n] = s;
    }

  Tensor3<double> dh{};  // dh[m][n][l] = d h_mn / d sigma^l
  for (int m = 0; m < d; ++m)
    for (int n = 0; n < d; ++n)
      for (int l = 0; l < d; ++l) {
        double s = 0.0;
        for (int b = 0; b < d; ++b)
          s += phi.d2(b, m, l) * x.d1(b, n) + phi.d1(b, m) * x.d2(b, n, l) + x.d2(b, m, l) * phi.d1(b, n) +
               x.d1(b, m) * phi.d2(b, n, l);
        dh[m][n][l] = s;
      }

  const auto& gam = gb.gamma;
  for (int a = 0; a < d; ++a)
    for (int m = 0; m < d; ++m)
      for (int n = 0; n < d; ++n) {
        double s = 0.0;
        for (int r = 0; r < d; ++r) {
          double hg = 0.0;
          for (int b = 0; b < d; ++b) hg += gp.h[r][b] * gam[b][m][n];
          s += -ginv[a][r] * hg + 0.5 * ginv[a][r] * (dh[r][m][n] + dh[r][n][m] - dh[m][n][r]);
        }
        gp.dGamma[a][m][n] = s;
      }

  // h_{rm;n} = d_n h_rm - Gamma^k_{nr} h_km - Gamma^k_{nm} h_rk
  Tensor3<double> hcov{};
  for (int r = 0; r < d; ++r)
    for (int m = 0; m < d; ++m)
      for (int n = 0; n < d; ++n) {
        double s = dh[r][m][n];
        for (int k = 0; k < d; ++k) s -= gam[k][n][r] * gp.h[k][m] + gam[k][n][m] * gp.h[r][k];
        hcov[r][m][n] = s;
      }
  for (int a = 0; a < d; ++a)
    for (int m = 0; m < d; ++m)
      for (int n = 0; n < d; ++n) {
        double s = 0.0;
        for (int r = 0; r < d; ++r) s += ginv[a][r] * (hcov[r][m][n] + hcov[r][n][m] - hcov[m][n][r]);
        gp.dGamma_covariant[a][m][n] = 0.5 * s;
      }

  double div = 0.0;
  for (int m = 0; m < d; ++m)
    for (int n = 0; n < d; ++n) div += gb.inv[n][m] * phi.d1(m, n);
  gp.div_phi = div;
  gp.dJ = gb.det * div;
  return gp;
}

// --- flow-level wrappers ---------------------------------------------------------

Mat<double> jacobian_matrix(const FlowMap& flow, const Point& p) { return jacobian_of(flow.jet(p, 1)); }

Mat<double> cofactor_matrix(const FlowMap& flow, const Point& p) {
  return cofactor(jacobian_of(flow.jet(p, 1)), flow.dim());
}

double jacobian_determinant(const FlowMap& flow, const Point& p) { return geometry_from_jet(flow.jet(p, 1)).det; }

Mat<double> inverse_jacobian(const FlowMap& flow, const Point& p) { return geometry_from_jet(flow.jet(p, 1)).inv; }

Mat<double> metric_tensor(const FlowMap& flow, const Point& p) {
  return metric_of(jacobian_of(flow.jet(p, 1)), flow.dim());
}

Tensor3<double> christoffel_symbols(const FlowMap& flow, const Point& p) {
  return christoffel_from_jet(flow.jet(p, 2));
}

Vec<double> check_jacobian_identity(const FlowMap& flow, const Point& p) {
  return jacobian_identity_residual(flow.jet(p, 2));
}

GeometryBundle geometry_bundle(const FlowMap& flow, const Point& p) { return geometry_from_jet(flow.jet(p, 2)); }

GeometryPerturbation geometry_perturbation(const FlowMap& flow, const FlowPerturbation& pert, const Point& p) {
  return perturbation_from_jets(flow.jet(p, 2), pert.jet(p, 2));
}

}  // namespace cflow
