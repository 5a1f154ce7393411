#include "cflow/determine.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

#include "cflow/errors.hpp"
#include "json.hpp"

namespace cflow {

namespace {

// Partials of f with respect to every jet entry of the flat layout, and
// optionally their total derivatives along sigma.
struct Partials {
  LawLayout L;
  std::vector<double> p;
  std::vector<Vec<double>> dp;

  double u() const { return p[L.u()]; }
  double u1(int m) const { return p[L.u1(m)]; }
  /// symmetric part of df/du_mn
  double u2(int m, int n) const { return 0.5 * (p[L.u2(m, n)] + p[L.u2(n, m)]); }
  double du2(int m, int n, int r) const { return 0.5 * (dp[L.u2(m, n)][r] + dp[L.u2(n, m)][r]); }
  double x1(int m, int n) const { return p[L.x1(m, n)]; }
  double dx1(int m, int n, int r) const { return dp[L.x1(m, n)][r]; }
  double x2(int m, int n, int l) const { return p[L.x2(m, n, l)]; }
  double x2sym(int m, int n, int l) const { return 0.5 * (x2(m, n, l) + x2(m, l, n)); }
  double dx2(int m, int n, int l, int r) const { return dp[L.x2(m, n, l)][r]; }
  double du1(int m, int r) const { return dp[L.u1(m)][r]; }
};

Partials law_partials(const SecondOrderScalarLaw& law, const Jet& u, const MapJet& x, const Point& pt, bool total) {
  const LawLayout L = law.layout();
  const int d = L.d;
  const int n = L.size();
  // value and sigma-derivatives of each argument
  std::vector<double> val(n, 0.0);
  std::vector<Vec<double>> der(n, Vec<double>{});
  val[L.u()] = u.v;
  for (int r = 0; r < d; ++r) der[L.u()][r] = u.g[r];
  for (int m = 0; m < d; ++m) {
    val[L.u1(m)] = u.g[m];
    val[L.s(m)] = pt[m];
    der[L.s(m)][m] = 1.0;
    for (int r = 0; r < d; ++r) der[L.u1(m)][r] = u.h[m][r];
    for (int k = 0; k < d; ++k) {
      val[L.u2(m, k)] = u.h[m][k];
      val[L.x1(m, k)] = x.d1(m, k);
      for (int r = 0; r < d; ++r) {
        der[L.u2(m, k)][r] = u.t[m][k][r];
        der[L.x1(m, k)][r] = x.d2(m, k, r);
      }
      for (int l = 0; l < d; ++l) {
        val[L.x2(m, k, l)] = x.d2(m, k, l);
        for (int r = 0; r < d; ++r) der[L.x2(m, k, l)][r] = x.c[m].t[k][l][r];
      }
    }
  }

  Partials out{L, std::vector<double>(L.jet_size(), 0.0), std::vector<Vec<double>>(L.jet_size(), Vec<double>{})};
  for (int k0 = 0; k0 < L.jet_size(); k0 += kMaxDim) {
    const int k1 = std::min(L.jet_size(), k0 + kMaxDim);
    if (total) {
      std::vector<D2> a(n);
      for (int i = 0; i < n; ++i) {
        a[i] = D2(D1(val[i]));
        if (i >= k0 && i < k1) a[i].v.d[i - k0] = 1.0;
        for (int r = 0; r < d; ++r) a[i].d[r] = D1(der[i][r]);
      }
      const D2 f = law.eval<D2>(std::span<const D2>(a));
      for (int i = k0; i < k1; ++i) {
        out.p[i] = f.v.d[i - k0];
        for (int r = 0; r < d; ++r) out.dp[i][r] = f.d[r].d[i - k0];
      }
    } else {
      std::vector<D1> a(n);
      for (int i = 0; i < n; ++i) {
        a[i] = D1(val[i]);
        if (i >= k0 && i < k1) a[i].d[i - k0] = 1.0;
      }
      const D1 f = law.eval<D1>(std::span<const D1>(a));
      for (int i = k0; i < k1; ++i) out.p[i] = f.d[i - k0];
    }
  }
  for (int i = 0; i < L.jet_size(); ++i) {
    bool ok = std::isfinite(out.p[i]);
    for (int r = 0; r < d; ++r) ok = ok && std::isfinite(out.dp[i][r]);
    if (!ok) throw NonFiniteError("law partials are not finite");
  }
  return out;
}

void require_third_order(const ScalarField& u) {
  if (u.max_order() < 3)
    throw std::invalid_argument("determining equations: the field must provide third derivatives");
}

struct Assembled {
  SymmetryCoefficients sc;
  Vec<double> divF{};  // dF^{nu rho}/dsigma^rho
};

Assembled assemble(const Partials& P, const LinkCoefficients& lc) {
  const int d = P.L.d;
  Assembled r;
  SymmetryCoefficients& s = r.sc;
  s.dim = d;
  s.H = P.u();
  for (int m = 0; m < d; ++m)
    for (int n = 0; n < d; ++n) {
      s.H += P.x1(m, n) * lc.b[m][n];
      for (int l = 0; l < d; ++l) s.H += P.x2(m, n, l) * lc.c[m][n][l];
    }
  for (int nu = 0; nu < d; ++nu) {
    double b = P.u1(nu);
    for (int m = 0; m < d; ++m) {
      b += P.x1(m, nu) * lc.a[m];
      for (int rho = 0; rho < d; ++rho) b += (P.x2(m, nu, rho) + P.x2(m, rho, nu)) * lc.b[m][rho];
    }
    s.B[nu] = b;
    for (int rho = 0; rho < d; ++rho) {
      double f = P.u2(nu, rho);
      for (int m = 0; m < d; ++m) f += P.x2sym(m, rho, nu) * lc.a[m];
      s.F[rho][nu] = f;
    }
  }

  // total derivatives along sigma
  for (int nu = 0; nu < d; ++nu) {
    double df = 0.0;
    for (int rho = 0; rho < d; ++rho) {
      df += P.du2(nu, rho, rho);
      for (int m = 0; m < d; ++m)
        df += 0.5 * (P.dx2(m, nu, rho, rho) + P.dx2(m, rho, nu, rho)) * lc.a[m] + P.x2sym(m, nu, rho) * lc.b[m][rho];
    }
    r.divF[nu] = df;

    double db = P.du1(nu, nu);
    for (int m = 0; m < d; ++m) {
      db += P.dx1(m, nu, nu) * lc.a[m] + P.x1(m, nu) * lc.b[m][nu];
      for (int rho = 0; rho < d; ++rho)
        db += (P.dx2(m, nu, rho, nu) + P.dx2(m, rho, nu, nu)) * lc.b[m][rho] +
              (P.x2(m, nu, rho) + P.x2(m, rho, nu)) * lc.c[m][rho][nu];
    }
    s.divB += db;
  }
  return r;
}

Assembled assemble_at(const SecondOrderScalarLaw& law, const AlgebraicFlowAnsatz& ansatz, const ScalarField& u,
                      const Point& p, MapJet* flow_jet) {
  if (law.dim() != ansatz.dim() || u.dim() != ansatz.dim())
    throw std::invalid_argument("determining equations: law, ansatz and field dimensions differ");
  require_third_order(u);
  const MapJet x = ansatz.compose(u).jet(p, 3);
  if (flow_jet) *flow_jet = x;
  const Partials P = law_partials(law, u.jet(p, 3), x, p, true);
  return assemble(P, link_coefficients(ansatz, u, p));
}

}  // namespace

LinkCoefficients link_coefficients(const AlgebraicFlowAnsatz& ansatz, const ScalarField& u, const Point& p) {
  const MapJet j = ansatz.link_jet(u, p, 2);
  LinkCoefficients lc;
  lc.dim = j.dim;
  for (int m = 0; m < j.dim; ++m) {
    lc.a[m] = j.c[m].v;
    for (int n = 0; n < j.dim; ++n) {
      lc.b[m][n] = j.c[m].g[n];
      for (int r = 0; r < j.dim; ++r) lc.c[m][n][r] = 0.5 * (j.c[m].h[n][r] + j.c[m].h[r][n]);
    }
  }
  return lc;
}

SymmetryCoefficients symmetry_coefficients(const SecondOrderScalarLaw& law, const AlgebraicFlowAnsatz& ansatz,
                                           const ScalarField& u, const Point& p) {
  return assemble_at(law, ansatz, u, p, nullptr).sc;
}

DeterminingResidual determining_residual(const SecondOrderScalarLaw& law, const AlgebraicFlowAnsatz& ansatz,
                                         const ScalarField& u, const Point& p, const DeterminingOptions& opts) {
  MapJet x;
  const Assembled a = assemble_at(law, ansatz, u, p, &x);
  const int d = law.dim();
  const Tensor3<double> gamma =
      opts.frozen_connection ? christoffel_from_jet(ansatz.frozen(u.value(p)).jet(p, 2)) : christoffel_from_jet(x);
  const Vec<double> trace = contracted_christoffel(gamma, d);

  DeterminingResidual r;
  r.dim = d;
  r.F = a.sc.F;
  r.B = a.sc.B;
  r.H = a.sc.H;
  for (int m = 0; m < d; ++m)
    for (int n = 0; n < d; ++n) r.Fsym[m][n] = r.F[m][n] - r.F[n][m];
  for (int nu = 0; nu < d; ++nu) {
    double s = a.divF[nu] - r.B[nu];
    for (int rho = 0; rho < d; ++rho) s += trace[rho] * r.F[rho][nu];
    r.R[nu] = s;
  }
  return r;
}

Vec<double> tonti_residual(const SecondOrderScalarLaw& law, const ScalarField& u, const Point& p) {
  require_third_order(u);
  const int d = law.dim();
  const Partials P = law_partials(law, u.jet(p, 3), identity_flow(d).jet(p, 3), p, true);
  Vec<double> t{};
  for (int nu = 0; nu < d; ++nu) {
    double s = P.u1(nu);
    for (int rho = 0; rho < d; ++rho) s -= P.du2(nu, rho, rho);
    t[nu] = s;
  }
  return t;
}

// --- fitting ------------------------------------------------------------------------------

std::string to_string(FitStatus s) { return s == FitStatus::converged ? "converged" : "no_convergence"; }

void FitResult::write_trace_csv(std::ostream& os) const {
  os << "iteration,residual_norm,damping,accepted\n";
  os.precision(17);
  for (const auto& t : trace) os << t.iteration << ',' << t.residual_norm << ',' << t.damping << ',' << (t.accepted ? 1 : 0) << '\n';
}

std::string FitResult::to_json(const std::vector<std::string>& names) const {
  nlohmann::ordered_json j;
  nlohmann::ordered_json th = nlohmann::ordered_json::object();
  for (std::size_t i = 0; i < theta.size(); ++i) th[i < names.size() ? names[i] : "th" + std::to_string(i)] = theta[i];
  j["theta"] = th;
  j["residual_norm"] = residual_norm;
  j["initial_norm"] = initial_norm;
  j["status"] = to_string(status);
  j["message"] = message;
  j["iterations"] = trace.empty() ? 0 : trace.back().iteration;
  return j.dump();
}

std::vector<double> determining_system(const SecondOrderScalarLaw& law, const AlgebraicFlowAnsatz& ansatz,
                                       const std::vector<ScalarField>& samples, const Grid& grid,
                                       const DeterminingOptions& opts) {
  const int d = law.dim();
  if (grid.rank() != d) throw std::invalid_argument("fit: grid rank differs from the law's dimension");
  std::vector<double> r;
  r.reserve(samples.size() * grid.size() * (d + d * d));
  for (const auto& u : samples)
    for (std::size_t k = 0; k < grid.size(); ++k) {
      const auto c = grid.coords(k);
      const DeterminingResidual dr = determining_residual(law, ansatz, u, Point(std::span<const double>(c)), opts);
      for (int nu = 0; nu < d; ++nu) r.push_back(dr.R[nu]);
      for (int m = 0; m < d; ++m)
        for (int n = 0; n < d; ++n) r.push_back(dr.Fsym[m][n]);
    }
  return r;
}

FitResult fit_symmetrizing_flow(const SecondOrderScalarLaw& law, const AlgebraicFlowAnsatz& family,
                                const std::vector<ScalarField>& samples, const Grid& grid, const FitOptions& opts) {
  if (samples.empty()) throw std::invalid_argument("fit: at least one field sample is required");
  const int np = family.parameters();
  using Vector = Eigen::VectorXd;
  auto system = [&](const Vector& th) {
    const auto r = determining_system(law, family.with_theta(std::vector<double>(th.data(), th.data() + np)), samples,
                                      grid, opts.determining);
    Vector v = Eigen::Map<const Vector>(r.data(), static_cast<Eigen::Index>(r.size()));
    if (!v.allFinite()) throw NonFiniteError("fit: non-finite residual");
    return v;
  };

  Vector theta = Vector::Zero(np);
  Vector r = system(theta);
  double norm = r.norm();
  double mu = opts.damping;
  FitResult res;
  res.initial_norm = norm;
  res.trace.push_back({0, norm, mu, true});

  auto finish = [&](FitStatus st, std::string msg) {
    res.theta.assign(theta.data(), theta.data() + np);
    res.residual_norm = norm;
    res.status = st;
    res.message = std::move(msg);
    return res;
  };

  if (norm <= opts.tolerance) return finish(FitStatus::converged, "initial flow already satisfies the equations");
  if (np == 0) return finish(FitStatus::no_convergence, "the family has no free parameters");

  for (int it = 1; it <= opts.max_iterations; ++it) {
    Eigen::MatrixXd J(r.size(), np);
    for (int i = 0; i < np; ++i) {
      const double h = opts.fd_step * std::max(1.0, std::abs(theta[i]));
      Vector tp = theta;
      tp[i] += h;
      J.col(i) = (system(tp) - r) / h;
    }
    const Vector g = J.transpose() * r;
    if (g.norm() < opts.gradient_tol)
      return finish(FitStatus::no_convergence, "gradient vanished before the residual did");

    const Eigen::MatrixXd JtJ = J.transpose() * J;
    bool accepted = false;
    const Vector step = (JtJ + mu * Eigen::MatrixXd::Identity(np, np)).ldlt().solve(-g);
    try {
      const Vector trial = theta + step;
      const Vector rt = system(trial);
      if (rt.norm() < norm) {
        theta = trial;
        r = rt;
        norm = rt.norm();
        accepted = true;
      }
    } catch (const DegenerateFlowError&) {
    } catch (const NonFiniteError&) {
    }
    mu = accepted ? mu / 3.0 : mu * 4.0;
    res.trace.push_back({it, norm, mu, accepted});

    if (norm <= opts.tolerance) return finish(FitStatus::converged, "residual below tolerance");
    if (it >= opts.stall_window) {
      const double before = res.trace[res.trace.size() - 1 - opts.stall_window].residual_norm;
      if ((before - norm) / before < opts.stall_tol)
        return finish(FitStatus::no_convergence, "residual stalled");
    }
  }
  return finish(FitStatus::no_convergence, "iteration limit reached");
}

}  // namespace cflow
