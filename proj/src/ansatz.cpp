#include "cflow/ansatz.hpp"

#include <algorithm>
#include <stdexcept>

#include "cflow/errors.hpp"

namespace cflow {

AlgebraicFlowAnsatz::AlgebraicFlowAnsatz(int dim, std::vector<double> theta, bool time_identity)
    : dim_(dim), theta_(std::move(theta)), time_identity_(time_identity) {
  if (dim < 2 || dim > kMaxDim) throw std::invalid_argument("ansatz: dimension must be 2..4");
  for (std::size_t i = 0; i < theta_.size(); ++i) names_.push_back("th" + std::to_string(i));
}

AlgebraicFlowAnsatz AlgebraicFlowAnsatz::from_expressions(int dim, const std::vector<std::string>& components,
                                                          std::vector<double> theta,
                                                          std::vector<std::string> param_names,
                                                          const std::map<std::string, double>& constants) {
  if (static_cast<int>(components.size()) != dim)
    throw std::invalid_argument("ansatz: expected " + std::to_string(dim) + " components");
  if (!param_names.empty() && param_names.size() != theta.size())
    throw std::invalid_argument("ansatz: parameter names and values differ in count");
  SymbolTable sym = spacetime_symbols(dim);
  sym.add("u", dim);
  AlgebraicFlowAnsatz a(dim, std::move(theta), false);
  if (!param_names.empty()) a.names_ = std::move(param_names);
  for (std::size_t i = 0; i < a.names_.size(); ++i) sym.add(a.names_[i], dim + 1 + static_cast<int>(i));
  for (const auto& [k, v] : constants) sym.add_constant(k, v);

  std::vector<Expr> exprs;
  for (const auto& c : components) exprs.push_back(Expr::parse(c, sym));
  std::string t0 = components[0];
  t0.erase(0, t0.find_first_not_of(' '));
  t0.erase(t0.find_last_not_of(' ') + 1);
  a.time_identity_ = t0 == "t" || t0 == "s0";
  a.text_ = components;

  auto make = [exprs, dim]<class T>() {
    return [exprs, dim](std::span<const T> s, const T& u, std::span<const double> th, std::span<T> x) {
      std::vector<T> vars(dim + 1 + th.size());
      for (int i = 0; i < dim; ++i) vars[i] = s[i];
      vars[dim] = u;
      for (std::size_t i = 0; i < th.size(); ++i) vars[dim + 1 + i] = T(th[i]);
      for (int m = 0; m < dim; ++m) x[m] = exprs[m].eval<T>(vars);
    };
  };
  a.f0_ = make.template operator()<double>();
  a.f1_ = make.template operator()<D1>();
  a.f2_ = make.template operator()<D2>();
  a.f3_ = make.template operator()<D3>();
  return a;
}

AlgebraicFlowAnsatz AlgebraicFlowAnsatz::identity(int dim) {
  auto a = from_functor(
      dim, {},
      []<class T>(std::span<const T> s, const T&, std::span<const double>, std::span<T> x) {
        for (std::size_t m = 0; m < s.size(); ++m) x[m] = s[m];
      },
      true);
  a.text_.clear();
  for (int m = 0; m < dim; ++m) a.text_.push_back("s" + std::to_string(m));
  return a;
}

AlgebraicFlowAnsatz AlgebraicFlowAnsatz::with_theta(std::vector<double> theta) const {
  if (theta.size() != theta_.size()) throw std::invalid_argument("ansatz: wrong parameter count");
  AlgebraicFlowAnsatz a = *this;
  a.theta_ = std::move(theta);
  return a;
}

namespace {

class ComposedSource final : public MapSource {
 public:
  ComposedSource(AlgebraicFlowAnsatz a, ScalarField u) : a_(std::move(a)), u_(std::move(u)) {}
  int dim() const override { return a_.dim(); }
  int max_order() const override { return std::min(3, u_.max_order()); }
  MapJet jet(const Point& p, int order) const override {
    const Jet uj = u_.jet(p, order);
    auto run = [&]<class T>() {
      std::array<T, kMaxDim> s{}, x{};
      for (int i = 0; i < p.size(); ++i) s[i] = seed<T>(p[i], i);
      const T uu = to_dual<T>(uj);
      a_.eval<T>(std::span<const T>(s.data(), p.size()), uu, std::span<T>(x.data(), p.size()));
      MapJet m;
      m.dim = p.size();
      for (int mu = 0; mu < m.dim; ++mu) {
        m.c[mu] = to_jet<T>(x[mu]);
        m.c[mu].order = order;
      }
      return m;
    };
    switch (order) {
      case 0: return run.template operator()<double>();
      case 1: return run.template operator()<D1>();
      case 2: return run.template operator()<D2>();
      default: return run.template operator()<D3>();
    }
  }

 private:
  AlgebraicFlowAnsatz a_;
  ScalarField u_;
};

class LinkSource final : public MapSource {
 public:
  LinkSource(AlgebraicFlowAnsatz a, ScalarField u, ScalarField phi)
      : a_(std::move(a)), u_(std::move(u)), phi_(std::move(phi)) {}
  int dim() const override { return a_.dim(); }
  int max_order() const override { return std::min({2, u_.max_order(), phi_.max_order()}); }
  MapJet jet(const Point& p, int order) const override {
    const MapJet a = a_.link_jet(u_, p, order);
    const Jet ph = phi_.jet(p, order);
    auto run = [&]<class T>() {
      MapJet m;
      m.dim = a.dim;
      const T f = to_dual<T>(ph);
      for (int mu = 0; mu < m.dim; ++mu) {
        m.c[mu] = to_jet<T>(to_dual<T>(a.c[mu]) * f);
        m.c[mu].order = order;
      }
      return m;
    };
    switch (order) {
      case 0: return run.template operator()<double>();
      case 1: return run.template operator()<D1>();
      default: return run.template operator()<D2>();
    }
  }

 private:
  AlgebraicFlowAnsatz a_;
  ScalarField u_, phi_;
};

}  // namespace

FlowMap AlgebraicFlowAnsatz::compose(const ScalarField& u) const {
  if (u.dim() != dim_) throw std::invalid_argument("ansatz: field dimension differs from the flow's");
  return FlowMap(std::make_shared<ComposedSource>(*this, u), time_identity_);
}

FlowMap AlgebraicFlowAnsatz::frozen(double u0) const { return compose(constant_field(dim_, u0)); }

MapJet AlgebraicFlowAnsatz::link_jet(const ScalarField& u, const Point& p, int order) const {
  if (order < 0 || order > 2) throw std::invalid_argument("ansatz: link jets are available to second order");
  const Jet uj = u.jet(p, order);
  // The outer dual slot 0 carries d/du; the inner levels carry sigma.
  auto run = [&]<class T>() {
    using DT = Dual<T>;
    std::array<DT, kMaxDim> s{}, x{};
    for (int i = 0; i < p.size(); ++i) s[i] = DT(seed<T>(p[i], i));
    DT uu = DT(to_dual<T>(uj));
    uu.d[0] = T(1.0);
    eval<DT>(std::span<const DT>(s.data(), p.size()), uu, std::span<DT>(x.data(), p.size()));
    MapJet m;
    m.dim = p.size();
    for (int mu = 0; mu < m.dim; ++mu) {
      m.c[mu] = to_jet<T>(x[mu].d[0]);
      m.c[mu].order = order;
    }
    return m;
  };
  MapJet m;
  switch (order) {
    case 0: m = run.template operator()<double>(); break;
    case 1: m = run.template operator()<D1>(); break;
    default: m = run.template operator()<D2>(); break;
  }
  if (!std::all_of(m.c.begin(), m.c.begin() + m.dim, [](const Jet& j) { return jet_finite(j); }))
    throw NonFiniteError("ansatz: non-finite link coefficient");
  return m;
}

FlowPerturbation AlgebraicFlowAnsatz::forward(const ScalarField& u, const ScalarField& phi) const {
  if (u.dim() != dim_ || phi.dim() != dim_) throw std::invalid_argument("ansatz: field dimension differs from the flow's");
  return FlowPerturbation(std::make_shared<LinkSource>(*this, u, phi));
}

}  // namespace cflow
