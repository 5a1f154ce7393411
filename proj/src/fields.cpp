#include "cflow/fields.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <random>
#include <sstream>

#include "cflow/errors.hpp"

namespace cflow {

ScalarField::ScalarField(std::shared_ptr<const ScalarSource> src) : src_(std::move(src)) {
  if (!src_) throw std::invalid_argument("ScalarField: null source");
  if (src_->dim() < 2 || src_->dim() > kMaxDim) throw std::invalid_argument("ScalarField: dimension must be 2..4");
}

Jet ScalarField::jet(const Point& p, int order) const {
  if (p.size() != dim())
    throw std::invalid_argument("ScalarField: point has " + std::to_string(p.size()) + " coordinates, field " +
                                std::to_string(dim()));
  if (order < 0 || order > max_order())
    throw std::invalid_argument("ScalarField: derivative order " + std::to_string(order) + " not available");
  Jet j = src_->jet(p, order);
  if (!jet_finite(j)) throw NonFiniteError("ScalarField: non-finite value or derivative");
  return j;
}

VectorField::VectorField(std::vector<ScalarField> comps) : comps_(std::move(comps)) {
  if (comps_.empty()) throw std::invalid_argument("VectorField: no components");
  for (const auto& c : comps_)
    if (c.dim() != comps_.front().dim()) throw std::invalid_argument("VectorField: components differ in dimension");
}

double field_derivative(const ScalarField& f, const Point& p, std::span<const int> idx) {
  const int k = static_cast<int>(idx.size());
  for (int a : idx)
    if (a < 0 || a >= f.dim()) throw std::invalid_argument("field_derivative: axis out of range");
  const Jet j = f.jet(p, k);
  switch (k) {
    case 0: return j.v;
    case 1: return j.g[idx[0]];
    case 2: return j.h[idx[0]][idx[1]];
    default: return j.t[idx[0]][idx[1]][idx[2]];
  }
}

namespace {

class ExprScalarSource final : public ScalarSource {
 public:
  ExprScalarSource(int dim, Expr e) : dim_(dim), e_(std::move(e)) {}
  int dim() const override { return dim_; }
  Jet jet(const Point& p, int order) const override {
    return functor_jet([this]<class T>(std::span<const T> s) { return e_.eval<T>(s); }, p, order);
  }

 private:
  int dim_;
  Expr e_;
};

class ConstantSource final : public ScalarSource {
 public:
  ConstantSource(int dim, double c) : dim_(dim), c_(c) {}
  int dim() const override { return dim_; }
  Jet jet(const Point&, int order) const override {
    Jet j;
    j.order = order;
    j.v = c_;
    return j;
  }

 private:
  int dim_;
  double c_;
};

class ComboSource final : public ScalarSource {
 public:
  explicit ComboSource(std::vector<std::pair<double, ScalarField>> terms) : terms_(std::move(terms)) {}
  int dim() const override { return terms_.front().second.dim(); }
  bool analytic() const override {
    return std::all_of(terms_.begin(), terms_.end(), [](const auto& t) { return t.second.analytic(); });
  }
  int max_order() const override {
    int m = 3;
    for (const auto& t : terms_) m = std::min(m, t.second.max_order());
    return m;
  }
  Jet jet(const Point& p, int order) const override {
    Jet acc;
    acc.order = order;
    for (const auto& [c, f] : terms_) acc = axpy(c, f.jet(p, order), acc);
    acc.order = order;
    return acc;
  }

 private:
  std::vector<std::pair<double, ScalarField>> terms_;
};

}  // namespace

ScalarField expression_field(int dim, const std::string& text) {
  return expression_field(dim, Expr::parse(text, spacetime_symbols(dim)));
}

ScalarField expression_field(int dim, Expr e) {
  if (e.arity() > dim) throw std::invalid_argument("expression_field: '" + e.text() + "' uses more coordinates than the domain has");
  return ScalarField(std::make_shared<ExprScalarSource>(dim, std::move(e)));
}

ScalarField constant_field(int dim, double c) { return ScalarField(std::make_shared<ConstantSource>(dim, c)); }

ScalarField linear_combination(std::vector<std::pair<double, ScalarField>> terms) {
  if (terms.empty()) throw std::invalid_argument("linear_combination: no terms");
  for (const auto& t : terms)
    if (t.second.dim() != terms.front().second.dim())
      throw std::invalid_argument("linear_combination: fields differ in dimension");
  return ScalarField(std::make_shared<ComboSource>(std::move(terms)));
}

// --- grid --------------------------------------------------------------------

Grid::Grid(std::vector<Axis> axes) : axes_(std::move(axes)) {
  if (axes_.empty() || axes_.size() > static_cast<std::size_t>(kMaxDim))
    throw std::invalid_argument("Grid: expected 1..4 axes");
  for (const auto& a : axes_) {
    if (!std::isfinite(a.lo) || !std::isfinite(a.hi) || !(a.hi > a.lo))
      throw std::invalid_argument("Grid: axis extents must be finite with hi > lo");
    if (a.nodes < 2) throw std::invalid_argument("Grid: at least 2 nodes per axis");
  }
}

std::size_t Grid::size() const {
  std::size_t n = 1;
  for (const auto& a : axes_) n *= static_cast<std::size_t>(a.nodes);
  return n;
}

std::vector<int> Grid::unflatten(std::size_t k) const {
  std::vector<int> idx(axes_.size());
  for (int a = rank() - 1; a >= 0; --a) {
    idx[a] = static_cast<int>(k % axes_[a].nodes);
    k /= axes_[a].nodes;
  }
  return idx;
}

std::size_t Grid::flatten(std::span<const int> idx) const {
  std::size_t k = 0;
  for (int a = 0; a < rank(); ++a) k = k * axes_[a].nodes + idx[a];
  return k;
}

std::vector<double> Grid::coords(std::size_t k) const {
  auto idx = unflatten(k);
  std::vector<double> c(idx.size());
  for (int a = 0; a < rank(); ++a) c[a] = axes_[a].node(idx[a]);
  return c;
}

// --- finite differences ---------------------------------------------------------

// Fornberg's recursion.
std::vector<double> fd_weights(double x0, std::span<const double> x, int m) {
  const int n = static_cast<int>(x.size());
  if (m < 0 || n <= m) throw std::invalid_argument("fd_weights: need more nodes than the derivative order");
  std::vector<std::vector<double>> c(n, std::vector<double>(m + 1, 0.0));
  double c1 = 1.0, c4 = x[0] - x0;
  c[0][0] = 1.0;
  for (int i = 1; i < n; ++i) {
    const int mn = std::min(i, m);
    double c2 = 1.0;
    const double c5 = c4;
    c4 = x[i] - x0;
    for (int j = 0; j < i; ++j) {
      const double c3 = x[i] - x[j];
      c2 *= c3;
      if (j == i - 1) {
        for (int k = mn; k >= 1; --k) c[i][k] = c1 * (k * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
        c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
      }
      for (int k = mn; k >= 1; --k) c[j][k] = (c4 * c[j][k] - k * c[j][k - 1]) / c3;
      c[j][0] = c4 * c[j][0] / c3;
    }
    c1 = c2;
  }
  std::vector<double> w(n);
  for (int i = 0; i < n; ++i) w[i] = c[i][m];
  return w;
}

namespace {

struct Stencil {
  int start = 0;
  std::vector<double> w;
};

// Centered when it fits, otherwise shifted inward with one extra point so the
// one-sided formula keeps the declared order.
Stencil make_stencil(int i, int n, int order, int deriv, double h) {
  const int half = order / 2;
  int width = order + 1;
  int start = i - half;
  if (start < 0 || i + half > n - 1) {
    width = std::min(n, order + deriv);
    start = std::clamp(i - width / 2, 0, n - width);
  }
  std::vector<double> xs(width);
  for (int k = 0; k < width; ++k) xs[k] = (start + k - i) * h;
  return {start, fd_weights(0.0, xs, deriv)};
}

// Cubic Lagrange weights on 4 consecutive nodes, position xi in node units.
template <class T>
std::array<T, 4> lagrange4(const T& xi, int base) {
  std::array<T, 4> w;
  for (int m = 0; m < 4; ++m) {
    T l(1.0);
    for (int k = 0; k < 4; ++k)
      if (k != m) l = l * (xi - double(base + k)) / double(m - k);
    w[m] = l;
  }
  return w;
}

int interp_base(double xi, int n) { return std::clamp(static_cast<int>(std::floor(xi)) - 1, 0, n - 4); }

void check_inside(const Axis& a, double x, const char* what) {
  const double tol = 1e-12 * (a.hi - a.lo);
  if (!(x >= a.lo - tol && x <= a.hi + tol)) {
    std::ostringstream os;
    os << what << ": coordinate " << x << " outside [" << a.lo << ", " << a.hi << "]";
    throw OutOfDomainError(os.str());
  }
}

}  // namespace

SampledField::SampledField(Grid grid, std::vector<double> values, int stencil_order)
    : grid_(std::move(grid)), values_(std::move(values)), order_(stencil_order) {
  if (order_ != 2 && order_ != 4) throw std::invalid_argument("SampledField: stencil order must be 2 or 4");
  if (grid_.rank() < 2) throw std::invalid_argument("SampledField: need a space-time grid (2..4 axes)");
  const int min_nodes = order_ == 4 ? 5 : 4;
  for (const auto& a : grid_.axes())
    if (a.nodes < min_nodes)
      throw std::invalid_argument("SampledField: need at least " + std::to_string(min_nodes) + " nodes per axis");
  if (values_.size() != grid_.size()) throw std::invalid_argument("SampledField: value count does not match grid");
  for (double v : values_)
    if (!std::isfinite(v)) throw NonFiniteError("SampledField: non-finite sample");

  const int d = grid_.rank();
  const std::size_t stride = 1 + d + d * d;
  nodal_.assign(grid_.size() * stride, 0.0);
  for (std::size_t k = 0; k < grid_.size(); ++k) {
    const auto idx = grid_.unflatten(k);
    double* out = &nodal_[k * stride];
    out[0] = values_[k];
    for (int a = 0; a < d; ++a) {
      out[1 + a] = fd_along(idx, a, 1);
      for (int b = 0; b <= a; ++b) {
        const double v = a == b ? fd_along(idx, a, 2) : fd_mixed(idx, a, b);
        out[1 + d + a * d + b] = out[1 + d + b * d + a] = v;
      }
    }
  }
}

std::shared_ptr<SampledField> SampledField::sample(const ScalarField& f, const Grid& grid, int stencil_order) {
  if (grid.rank() != f.dim()) throw std::invalid_argument("SampledField::sample: grid rank differs from field dimension");
  std::vector<double> v(grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const auto c = grid.coords(k);
    v[k] = f.value(Point(std::span<const double>(c)));
  }
  return std::make_shared<SampledField>(grid, std::move(v), stencil_order);
}

double SampledField::fd_along(std::span<const int> idx, int axis, int deriv) const {
  const Axis& ax = grid_.axis(axis);
  const Stencil st = make_stencil(idx[axis], ax.nodes, order_, deriv, ax.spacing());
  std::vector<int> j(idx.begin(), idx.end());
  double s = 0.0;
  for (std::size_t k = 0; k < st.w.size(); ++k) {
    j[axis] = st.start + static_cast<int>(k);
    s += st.w[k] * values_[grid_.flatten(j)];
  }
  return s;
}

double SampledField::fd_mixed(std::span<const int> idx, int a, int b) const {
  const Axis& aa = grid_.axis(a);
  const Axis& ab = grid_.axis(b);
  const Stencil sa = make_stencil(idx[a], aa.nodes, order_, 1, aa.spacing());
  const Stencil sb = make_stencil(idx[b], ab.nodes, order_, 1, ab.spacing());
  std::vector<int> j(idx.begin(), idx.end());
  double s = 0.0;
  for (std::size_t p = 0; p < sa.w.size(); ++p)
    for (std::size_t q = 0; q < sb.w.size(); ++q) {
      j[a] = sa.start + static_cast<int>(p);
      j[b] = sb.start + static_cast<int>(q);
      s += sa.w[p] * sb.w[q] * values_[grid_.flatten(j)];
    }
  return s;
}

Jet SampledField::jet(const Point& p, int order) const {
  if (order > 2) throw std::invalid_argument("SampledField: derivatives above second order are not available");
  const int d = grid_.rank();
  std::array<int, kMaxDim> base{};
  std::array<std::array<double, 4>, kMaxDim> w{};
  for (int a = 0; a < d; ++a) {
    const Axis& ax = grid_.axis(a);
    check_inside(ax, p[a], "SampledField");
    const double xi = (p[a] - ax.lo) / ax.spacing();
    base[a] = interp_base(xi, ax.nodes);
    w[a] = lagrange4(xi, base[a]);
  }
  const std::size_t stride = 1 + d + d * d;
  Jet j;
  j.order = order;
  std::array<int, kMaxDim> off{};
  std::vector<int> idx(d);
  const int total = 1 << (2 * d);
  for (int n = 0; n < total; ++n) {
    double wt = 1.0;
    for (int a = 0, r = n; a < d; ++a, r >>= 2) {
      off[a] = r & 3;
      idx[a] = base[a] + off[a];
      wt *= w[a][off[a]];
    }
    const double* q = &nodal_[grid_.flatten(idx) * stride];
    j.v += wt * q[0];
    if (order >= 1)
      for (int a = 0; a < d; ++a) j.g[a] += wt * q[1 + a];
    if (order >= 2)
      for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b) j.h[a][b] += wt * q[1 + d + a * d + b];
  }
  return j;
}

void SampledField::write_csv(std::ostream& os) const {
  const int d = grid_.rank();
  for (int a = 0; a < d; ++a) os << 's' << a << ',';
  os << "value\n";
  os.precision(17);
  for (std::size_t k = 0; k < grid_.size(); ++k) {
    for (double c : grid_.coords(k)) os << c << ',';
    os << values_[k] << '\n';
  }
}

std::shared_ptr<SampledField> SampledField::read_csv(std::istream& is, int stencil_order) {
  std::string line;
  if (!std::getline(is, line)) throw std::invalid_argument("read_csv: empty input");
  const int cols = static_cast<int>(std::count(line.begin(), line.end(), ',')) + 1;
  const int d = cols - 1;
  if (d < 2 || d > kMaxDim) throw std::invalid_argument("read_csv: expected 2..4 axis columns plus a value column");
  std::vector<std::vector<double>> rows;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::vector<double> r;
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        r.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw std::invalid_argument("read_csv: bad number on line " + std::to_string(lineno));
      }
    }
    if (static_cast<int>(r.size()) != cols)
      throw std::invalid_argument("read_csv: wrong column count on line " + std::to_string(lineno));
    rows.push_back(std::move(r));
  }
  std::vector<Axis> axes(d);
  for (int a = 0; a < d; ++a) {
    std::vector<double> u;
    for (const auto& r : rows) u.push_back(r[a]);
    std::sort(u.begin(), u.end());
    u.erase(std::unique(u.begin(), u.end(), [](double x, double y) { return std::abs(x - y) <= 1e-12 * (1 + std::abs(x)); }),
            u.end());
    if (u.size() < 2) throw std::invalid_argument("read_csv: axis " + std::to_string(a) + " has a single value");
    axes[a] = {u.front(), u.back(), static_cast<int>(u.size())};
    const double h = axes[a].spacing();
    for (std::size_t k = 0; k < u.size(); ++k)
      if (std::abs(u[k] - axes[a].node(static_cast<int>(k))) > 1e-9 * h)
        throw std::invalid_argument("read_csv: axis " + std::to_string(a) + " is not uniformly spaced");
  }
  Grid grid(axes);
  if (rows.size() != grid.size()) throw std::invalid_argument("read_csv: rows do not form a complete tensor grid");
  std::vector<double> values(grid.size());
  std::vector<char> seen(grid.size(), 0);
  std::vector<int> idx(d);
  for (const auto& r : rows) {
    for (int a = 0; a < d; ++a) idx[a] = static_cast<int>(std::lround((r[a] - axes[a].lo) / axes[a].spacing()));
    const std::size_t k = grid.flatten(idx);
    if (seen[k]) throw std::invalid_argument("read_csv: duplicate node");
    seen[k] = 1;
    values[k] = r[d];
  }
  return std::make_shared<SampledField>(grid, std::move(values), stencil_order);
}

namespace {

class SampledMapSource final : public MapSource {
 public:
  explicit SampledMapSource(std::vector<std::shared_ptr<const SampledField>> c) : c_(std::move(c)) {}
  int dim() const override { return c_.front()->dim(); }
  int components() const override { return static_cast<int>(c_.size()); }
  int max_order() const override { return 2; }
  MapJet jet(const Point& p, int order) const override {
    MapJet m;
    m.dim = components();
    for (int mu = 0; mu < m.dim; ++mu) m.c[mu] = c_[mu]->jet(p, order);
    return m;
  }

 private:
  std::vector<std::shared_ptr<const SampledField>> c_;
};

}  // namespace

FlowMap sampled_flow(std::vector<std::shared_ptr<const SampledField>> comps, bool time_identity) {
  if (comps.empty()) throw std::invalid_argument("sampled_flow: no components");
  for (const auto& c : comps) {
    if (!c) throw std::invalid_argument("sampled_flow: null component");
    if (c->grid().axes().size() != comps.front()->grid().axes().size() || c->dim() != comps.front()->dim())
      throw std::invalid_argument("sampled_flow: components live on different grids");
  }
  return FlowMap(std::make_shared<SampledMapSource>(std::move(comps)), time_identity);
}

// --- noise -----------------------------------------------------------------------

NoisePath::NoisePath(std::uint64_t seed, const Grid& labels, double t0, double t1, int steps, double scale)
    : seed_(seed), labels_(labels), t0_(t0), dt_((t1 - t0) / steps), steps_(steps), n_(labels.rank()), scale_(scale) {
  if (steps < 1 || !(t1 > t0)) throw std::invalid_argument("NoisePath: need t1 > t0 and at least one step");
  if (!(scale >= 0.0)) throw std::invalid_argument("NoisePath: scale must be non-negative");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double s = scale * std::sqrt(dt_);
  b_.assign(labels_.size() * (steps_ + 1) * n_, 0.0);
  for (std::size_t node = 0; node < labels_.size(); ++node)
    for (int k = 1; k <= steps_; ++k)
      for (int j = 0; j < n_; ++j) {
        const std::size_t at = (node * (steps_ + 1) + k) * n_ + j;
        b_[at] = b_[at - n_] + s * normal(rng);
      }
}

double NoisePath::eval_node(std::size_t node, int j, double t) const {
  const double tau = (t - t0_) / dt_;
  if (!(tau >= -1e-12 && tau <= steps_ + 1e-12)) throw OutOfDomainError("NoisePath: time outside the integration window");
  const int k = std::clamp(static_cast<int>(std::floor(tau)), 0, steps_ - 1);
  const double f = tau - k;
  const std::size_t at = (node * (steps_ + 1) + k) * n_ + j;
  return (1.0 - f) * b_[at] + f * b_[at + n_];
}

std::vector<double> NoisePath::eval(std::span<const double> sigma, double t) const {
  if (static_cast<int>(sigma.size()) != n_) throw std::invalid_argument("NoisePath: label has the wrong dimension");
  std::vector<int> idx(n_);
  for (int a = 0; a < n_; ++a) {
    const Axis& ax = labels_.axis(a);
    check_inside(ax, sigma[a], "NoisePath");
    idx[a] = std::clamp(static_cast<int>(std::lround((sigma[a] - ax.lo) / ax.spacing())), 0, ax.nodes - 1);
  }
  const std::size_t node = labels_.flatten(idx);
  std::vector<double> out(n_);
  for (int j = 0; j < n_; ++j) out[j] = eval_node(node, j, t);
  return out;
}

// --- integrated flows ----------------------------------------------------------------

IntegratedFlow::IntegratedFlow(Grid labels, double t0, double t1, int steps, std::vector<double> x,
                               std::vector<double> v)
    : labels_(std::move(labels)),
      t0_(t0),
      t1_(t1),
      dt_((t1 - t0) / steps),
      steps_(steps),
      n_(labels_.rank()),
      x_(std::move(x)),
      v_(std::move(v)) {
  for (const auto& a : labels_.axes())
    if (a.nodes < 4) throw std::invalid_argument("IntegratedFlow: need at least 4 label nodes per axis");
}

template <class T>
void IntegratedFlow::eval(std::span<const T> s, std::span<T> out) const {
  const double t = primal(s[0]);
  const Axis tax{t0_, t1_, steps_ + 1};
  check_inside(tax, t, "IntegratedFlow");
  const int k = std::clamp(static_cast<int>(std::floor((t - t0_) / dt_)), 0, steps_ - 1);
  const T tau = (s[0] - (t0_ + k * dt_)) / dt_;
  const T tau2 = tau * tau, tau3 = tau2 * tau;
  const T h00 = 2.0 * tau3 - 3.0 * tau2 + 1.0;
  const T h10 = (tau3 - 2.0 * tau2 + tau) * dt_;
  const T h01 = -2.0 * tau3 + 3.0 * tau2;
  const T h11 = (tau3 - tau2) * dt_;

  std::array<int, kMaxDim> base{};
  std::array<std::array<T, 4>, kMaxDim> w{};
  for (int a = 0; a < n_; ++a) {
    const Axis& ax = labels_.axis(a);
    check_inside(ax, primal(s[a + 1]), "IntegratedFlow");
    const T xi = (s[a + 1] - ax.lo) / ax.spacing();
    base[a] = interp_base(primal(xi), ax.nodes);
    w[a] = lagrange4(xi, base[a]);
  }
  std::array<T, kMaxDim> acc{};
  std::vector<int> idx(n_);
  const int total = 1 << (2 * n_);
  for (int m = 0; m < total; ++m) {
    T wt(1.0);
    for (int a = 0, r = m; a < n_; ++a, r >>= 2) {
      idx[a] = base[a] + (r & 3);
      wt = wt * w[a][r & 3];
    }
    const std::size_t node = labels_.flatten(idx);
    const std::size_t at0 = (node * (steps_ + 1) + k) * n_;
    const std::size_t at1 = at0 + n_;
    for (int j = 0; j < n_; ++j) {
      const T hx = h00 * x_[at0 + j] + h10 * v_[at0 + j] + h01 * x_[at1 + j] + h11 * v_[at1 + j];
      acc[j] = acc[j] + wt * hx;
    }
  }
  out[0] = s[0];
  for (int j = 0; j < n_; ++j) out[j + 1] = acc[j];
}

template void IntegratedFlow::eval<double>(std::span<const double>, std::span<double>) const;
template void IntegratedFlow::eval<D1>(std::span<const D1>, std::span<D1>) const;
template void IntegratedFlow::eval<D2>(std::span<const D2>, std::span<D2>) const;
template void IntegratedFlow::eval<D3>(std::span<const D3>, std::span<D3>) const;

MapJet IntegratedFlow::jet(const Point& p, int order) const {
  return functor_map_jet([this]<class T>(std::span<const T> s, std::span<T> out) { eval<T>(s, out); }, dim(), p,
                         order);
}

void IntegratedFlow::write_trajectories(std::ostream& os) const {
  os << 't';
  for (int a = 1; a <= n_; ++a) os << ",s" << a;
  for (int a = 1; a <= n_; ++a) os << ",x" << a;
  os << '\n';
  os.precision(17);
  for (std::size_t node = 0; node < labels_.size(); ++node) {
    const auto c = labels_.coords(node);
    for (int k = 0; k <= steps_; ++k) {
      os << t0_ + k * dt_;
      for (double v : c) os << ',' << v;
      for (int j = 0; j < n_; ++j) os << ',' << node_position(node, k, j);
      os << '\n';
    }
  }
}

namespace {

FlowMap integrate(const VectorField& U, const NoisePath* noise, const Grid& labels, double t0, double t1, int steps,
                  const IntegrationOptions& opts) {
  const int n = labels.rank();
  if (n < 1 || n > 3) throw std::invalid_argument("integrate_flow_map: need 1..3 spatial label axes");
  if (U.size() != n) throw std::invalid_argument("integrate_flow_map: velocity needs one component per spatial axis");
  if (U.dim() != n + 1) throw std::invalid_argument("integrate_flow_map: velocity must be a field over (t, x)");
  if (steps < 1 || !std::isfinite(t0) || !std::isfinite(t1) || !(t1 > t0))
    throw std::invalid_argument("integrate_flow_map: need t1 > t0 and at least one step");
  const double dt = (t1 - t0) / steps;

  std::array<double, kMaxDim> lo{}, hi{};
  for (int a = 0; a < n; ++a) {
    const Axis& ax = labels.axis(a);
    const double c = 0.5 * (ax.lo + ax.hi), r = 0.5 * (ax.hi - ax.lo) * opts.bbox_factor;
    lo[a] = c - r;
    hi[a] = c + r;
  }

  std::vector<double> x(labels.size() * (steps + 1) * n), v(x.size());
  std::array<double, kMaxDim> pt{};
  auto velocity = [&](std::size_t node, double t, const double* y, double* out) {
    pt[0] = t;
    for (int j = 0; j < n; ++j) pt[j + 1] = noise ? y[j] + noise->eval_node(node, j, t) : y[j];
    const Point p(std::span<const double>(pt.data(), n + 1));
    for (int j = 0; j < n; ++j) out[j] = U[j].value(p);
  };

  for (std::size_t node = 0; node < labels.size(); ++node) {
    const auto s = labels.coords(node);
    double* X = &x[node * (steps + 1) * n];
    double* V = &v[node * (steps + 1) * n];
    std::copy(s.begin(), s.end(), X);
    std::array<double, kMaxDim> k1{}, k2{}, k3{}, k4{}, y{};
    for (int k = 0; k < steps; ++k) {
      const double t = t0 + k * dt;
      const double* xk = X + k * n;
      velocity(node, t, xk, k1.data());
      for (int j = 0; j < n; ++j) y[j] = xk[j] + 0.5 * dt * k1[j];
      velocity(node, t + 0.5 * dt, y.data(), k2.data());
      for (int j = 0; j < n; ++j) y[j] = xk[j] + 0.5 * dt * k2[j];
      velocity(node, t + 0.5 * dt, y.data(), k3.data());
      for (int j = 0; j < n; ++j) y[j] = xk[j] + dt * k3[j];
      velocity(node, t + dt, y.data(), k4.data());
      for (int j = 0; j < n; ++j) {
        V[k * n + j] = k1[j];
        const double xn = xk[j] + dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        if (!std::isfinite(xn) || xn < lo[j] || xn > hi[j]) {
          std::ostringstream os;
          os << "trajectory from label node " << node << " left the bounding box at t = " << t + dt;
          throw BlowUpError(os.str());
        }
        X[(k + 1) * n + j] = xn;
      }
    }
    velocity(node, t1, X + steps * n, V + steps * n);
  }
  return FlowMap(std::make_shared<IntegratedFlow>(labels, t0, t1, steps, std::move(x), std::move(v)), true);
}

}  // namespace

FlowMap integrate_flow_map(const VectorField& velocity, const Grid& labels, double t0, double t1, int steps,
                           const IntegrationOptions& opts) {
  return integrate(velocity, nullptr, labels, t0, t1, steps, opts);
}

FlowMap integrate_noisy_flow_map(const VectorField& velocity, const NoisePath& noise, const Grid& labels, double t0,
                                 double t1, int steps, const IntegrationOptions& opts) {
  return integrate(velocity, &noise, labels, t0, t1, steps, opts);
}

}  // namespace cflow
