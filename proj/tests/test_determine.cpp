#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "cflow/determine.hpp"
#include "cflow/errors.hpp"
#include "cflow/variational.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace cflow;

namespace {

const double pi = std::numbers::pi;

SecondOrderScalarLaw law2(const std::string& text) { return SecondOrderScalarLaw::from_expression(2, text); }

// A few monomials in the jet of u and the coordinates, with random coefficients.
std::string random_polynomial_law(int d, std::mt19937_64& rng) {
  std::vector<std::string> atoms{"u"};
  const char* coord[] = {"t", "x", "y", "z"};
  for (int m = 0; m < d; ++m) {
    atoms.push_back("u_" + std::to_string(m));
    atoms.push_back(coord[m]);
    for (int n = m; n < d; ++n) atoms.push_back("u_" + std::to_string(m) + std::to_string(n));
  }
  std::uniform_int_distribution<int> pick(0, static_cast<int>(atoms.size()) - 1), deg(1, 3);
  std::uniform_real_distribution<double> c(-2.0, 2.0);
  std::string s;
  for (int term = 0; term < 4; ++term) {
    std::ostringstream t;
    t.precision(17);
    t << c(rng);
    for (int k = deg(rng); k > 0; --k) t << "*" << atoms[pick(rng)];
    s += (term ? " + " : "") + t.str();
  }
  return s;
}

ScalarField smooth_field(int d) {
  return d == 2 ? expression_field(2, "sin(t + 2*x) + 0.3*x*x*t + 0.5")
                : expression_field(3, "cos(x - y + t) + 0.2*x*y*t + 0.5*y*y");
}

}  // namespace

TEST_CASE("link coefficients") {
  const auto u = expression_field(2, "exp(0.5*t)*sin(x) + x*x");
  const Point p{0.3, 0.6};

  SUBCASE("identity ansatz") {
    const auto lc = link_coefficients(AlgebraicFlowAnsatz::identity(2), u, p);
    for (int m = 0; m < 2; ++m) {
      CHECK(lc.a[m] == 0.0);
      for (int n = 0; n < 2; ++n) {
        CHECK(lc.b[m][n] == 0.0);
        for (int r = 0; r < 2; ++r) CHECK(lc.c[m][n][r] == 0.0);
      }
    }
  }

  SUBCASE("constant link") {
    const auto lc = link_coefficients(AlgebraicFlowAnsatz::from_expressions(2, {"t", "x + 0.3*u"}, {}), u, p);
    CHECK(lc.a[1] == doctest::Approx(0.3));
    for (int n = 0; n < 2; ++n) {
      CHECK(lc.b[1][n] == 0.0);
      for (int r = 0; r < 2; ++r) CHECK(lc.c[1][n][r] == 0.0);
    }
  }

  SUBCASE("link growing in time") {
    const double beta = 0.7;
    const auto lc = link_coefficients(AlgebraicFlowAnsatz::from_expressions(2, {"t", "x + th0*u*t"}, {beta}), u, p);
    CHECK(lc.a[1] == doctest::Approx(beta * p[0]));
    CHECK(lc.b[1][0] == doctest::Approx(beta));
    CHECK(lc.b[1][1] == 0.0);
    CHECK(lc.c[1][0][0] == 0.0);
  }

  SUBCASE("perturbation derivatives rebuild from a, b, c") {
    const auto ansatz = AlgebraicFlowAnsatz::from_expressions(2, {"t + 0.1*u*u", "x + 0.3*u*x + 0.2*sin(u)*t"}, {});
    const auto phi = expression_field(2, "cos(2*x - t) + t*x");
    const auto ph = ansatz.forward(u, phi);
    for (std::uint64_t s = 0; s < 10; ++s) {
      const Point q = cflow::testing::random_point(2, s);
      const auto lc = link_coefficients(ansatz, u, q);
      const Jet f = phi.jet(q, 2);
      const MapJet j = ph.jet(q, 2);
      const double h = 1e-4;
      for (int m = 0; m < 2; ++m)
        for (int n = 0; n < 2; ++n) {
          const double first = lc.b[m][n] * f.v + lc.a[m] * f.g[n];
          CHECK(std::abs(j.d1(m, n) - first) < 1e-12);
          const double fd1 = (ph.jet(q.with(n, q[n] + h), 0).c[m].v - ph.jet(q.with(n, q[n] - h), 0).c[m].v) / (2 * h);
          CHECK(std::abs(fd1 - first) < 1e-6);
          for (int r = 0; r < 2; ++r) {
            const double second = lc.c[m][n][r] * f.v + lc.b[m][n] * f.g[r] + lc.b[m][r] * f.g[n] + lc.a[m] * f.h[n][r];
            CHECK(std::abs(j.d2(m, n, r) - second) < 1e-12);
            const double fd2 = (ph.jet(q.with(r, q[r] + h), 1).d1(m, n) - ph.jet(q.with(r, q[r] - h), 1).d1(m, n)) / (2 * h);
            CHECK(std::abs(fd2 - second) < 1e-6);
          }
        }
    }
  }
}

TEST_CASE("symmetry coefficients") {
  const auto id = AlgebraicFlowAnsatz::identity(2);
  const auto u = smooth_field(2);
  const Point p{0.2, 0.4};

  const auto lap = symmetry_coefficients(law2("u_11"), id, u, p);
  CHECK(lap.H == 0.0);
  CHECK(lap.B[0] == 0.0);
  CHECK(lap.B[1] == 0.0);
  CHECK(lap.F[1][1] == 1.0);
  CHECK(lap.F[0][0] == 0.0);
  CHECK(lap.F[0][1] == 0.0);

  const auto heat = symmetry_coefficients(fixed_heat_law(0.25), id, u, p);
  CHECK(heat.H == 0.0);
  CHECK(heat.B[0] == 1.0);
  CHECK(heat.B[1] == 0.0);
  CHECK(heat.F[1][1] == -0.25);
  CHECK(heat.F[0][0] == 0.0);
  CHECK(heat.F[0][1] == 0.0);

  // a mixed partial written once is split evenly
  const auto mixed = symmetry_coefficients(law2("u_01"), id, u, p);
  CHECK(mixed.F[0][1] == 0.5);
  CHECK(mixed.F[1][0] == 0.5);
}

TEST_CASE("symmetry integrand reproduces the linearized operator") {
  const auto q = QuadratureSpec::box(2, 10, 0.1, 0.9);
  std::mt19937_64 rng(17);
  const std::vector<std::string> laws{"u_0 - 0.5*u_11 - u*u_1*x_1_1", "u_0 - u_1*x_1_0/x_1_1 - 0.3/x_1_1^3*(x_1_1*u_11 - x_1_11*u_1)",
                                      "u*u_01 + x_0_11*u_1 + sin(u)*x_1_01 + t*u_00"};
  const std::vector<std::string> ansatze{"x + 0.2*u*x", "x + 0.1*u*u + 0.15*u*t", "x + 0.3*sin(u)*t*x"};
  for (std::size_t i = 0; i < laws.size(); ++i) {
    const auto law = law2(laws[i]);
    const auto ansatz = AlgebraicFlowAnsatz::from_expressions(2, {"t", ansatze[i]}, {});
    const auto link = algebraic_link(ansatz);
    const LawOperator op(law);
    const auto u = expression_field(2, "0.5*sin(t + 2*x) + 0.3*x*t");
    const auto phi = expression_field(2, "cos(3*x) + t"), psi = expression_field(2, "x*x - t*x + 1");
    const FlowMap flow = link.flow_of(VectorField{u});
    const double lhs = advective_form(linearized_operator(op, link, VectorField{u}, flow, VectorField{phi}),
                                      pointwise(psi), flow, q);
    const double rhs = integrate(q, [&](const Point& p) {
      const auto sc = symmetry_coefficients(law, ansatz, u, p);
      const Jet f = phi.jet(p, 2);
      double s = sc.H * f.v;
      for (int m = 0; m < 2; ++m) {
        s += sc.B[m] * f.g[m];
        for (int n = 0; n < 2; ++n) s += sc.F[m][n] * f.h[m][n];
      }
      return psi.value(p) * s * jacobian_determinant(flow, p);
    });
    CHECK(std::abs(lhs - rhs) < 1e-6 * std::max(1.0, std::abs(lhs)));
  }
}

TEST_CASE("integration by parts with boundary-vanishing probes") {
  const auto q = QuadratureSpec::box(2, 24);
  const auto law = law2("u_0*u_1 - 0.4*u*u_11 + x_1_0*u_1 + u*x_1_11");
  const auto ansatz = AlgebraicFlowAnsatz::from_expressions(2, {"t", "x + 0.2*u*x + 0.1*u*t"}, {});
  const auto u = expression_field(2, "0.5*sin(t + 2*x) + 0.3*x*t");
  const auto phi = expression_field(2, "sin(pi*x)*sin(pi*t)"), psi = expression_field(2, "sin(2*pi*x)*sin(pi*t)*(1 + x)");
  const FlowMap flow = ansatz.compose(u);
  double terms[3] = {0, 0, 0};
  for (int k = 0; k < 3; ++k)
    terms[k] = integrate(q, [&](const Point& p) {
      const auto sc = symmetry_coefficients(law, ansatz, u, p);
      const MapJet x = flow.jet(p, 2);
      const double J = geometry_from_jet(x).det;
      const Jet f = phi.jet(p, 1), g = psi.jet(p, 1);
      double s = 0.0;
      if (k == 0)
        for (int m = 0; m < 2; ++m) s += f.v * sc.B[m] * g.g[m];
      if (k == 1)
        for (int m = 0; m < 2; ++m) s += g.v * sc.B[m] * f.g[m];
      if (k == 2) {
        const auto tr = contracted_christoffel(christoffel_from_jet(x), 2);
        s = sc.divB;
        for (int m = 0; m < 2; ++m) s += sc.B[m] * tr[m];
        s *= g.v * f.v;
      }
      return s * J;
    });
  CHECK(std::abs(terms[0]) > 1e-2);  // not trivially zero
  CHECK(std::abs(terms[0] + terms[1] + terms[2]) < 1e-6);
}

TEST_CASE("determining residual and the classical conditions") {
  const auto id = AlgebraicFlowAnsatz::identity(2);
  const auto u = smooth_field(2);

  SUBCASE("hand cases") {
    for (std::uint64_t s = 0; s < 5; ++s) {
      const Point p = cflow::testing::random_point(2, s);
      const auto lap = determining_residual(SecondOrderScalarLaw::from_expression(3, "u_11 + u_22"),
                                            AlgebraicFlowAnsatz::identity(3), smooth_field(3),
                                            cflow::testing::random_point(3, s));
      for (int m = 0; m < 3; ++m) {
        CHECK(lap.R[m] == 0.0);
        for (int n = 0; n < 3; ++n) CHECK(lap.Fsym[m][n] == 0.0);
      }
      const auto heat = determining_residual(fixed_heat_law(0.3), id, u, p);
      CHECK(heat.R[0] == -1.0);
      CHECK(heat.R[1] == 0.0);
      const auto t = tonti_residual(fixed_heat_law(0.3), u, p);
      CHECK(t[0] == 1.0);
      CHECK(t[1] == 0.0);
      const auto cubic = tonti_residual(law2("u_1*u_11"), u, p);
      CHECK(std::abs(cubic[0]) < 1e-14);
      CHECK(std::abs(cubic[1]) < 1e-14);
      CHECK(tonti_residual(SecondOrderScalarLaw::from_expression(3, "u_11 + u_22"), smooth_field(3),
                           cflow::testing::random_point(3, s))[1] == 0.0);
    }
  }

  SUBCASE("identity ansatz reduces to the classical condition") {
    std::mt19937_64 rng(99);
    double worst = 0.0;
    for (int i = 0; i < 20; ++i) {
      const int d = i % 2 ? 3 : 2;
      const auto law = SecondOrderScalarLaw::from_expression(d, random_polynomial_law(d, rng));
      const Point p = cflow::testing::random_point(d, 200 + i);
      const auto r = determining_residual(law, AlgebraicFlowAnsatz::identity(d), smooth_field(d), p);
      const auto t = tonti_residual(law, smooth_field(d), p);
      for (int m = 0; m < d; ++m) worst = std::max(worst, std::abs(r.R[m] + t[m]));
    }
    CHECK(worst < 1e-9);
  }

  SUBCASE("residual scales with the law") {
    const auto law = law2("u_0 - u*u_11 + x_1_0*u_1 + u*x_1_11");
    const auto ansatz = AlgebraicFlowAnsatz::from_expressions(2, {"t", "x + 0.2*u*x"}, {});
    for (std::uint64_t s = 0; s < 5; ++s) {
      const Point p = cflow::testing::random_point(2, s);
      const auto r1 = determining_residual(law, ansatz, u, p);
      const auto r2 = determining_residual(law.scaled(-3.5), ansatz, u, p);
      for (int m = 0; m < 2; ++m) CHECK(std::abs(r2.R[m] + 3.5 * r1.R[m]) < 1e-10);
    }
  }

  SUBCASE("connection from the frozen flow") {
    const auto law = law2("u_0 - 0.5*u_11");
    const Point p{0.2, 0.3};
    const auto a = AlgebraicFlowAnsatz::from_expressions(2, {"t", "x + 0.3*u*x"}, {});
    const auto composed = determining_residual(law, a, u, p);
    const auto frozen = determining_residual(law, a, u, p, {true});
    CHECK(std::abs(composed.R[1] - frozen.R[1]) > 1e-6);
    const auto i1 = determining_residual(law, id, u, p), i2 = determining_residual(law, id, u, p, {true});
    CHECK(i1.R[0] == i2.R[0]);
    CHECK(i1.R[1] == i2.R[1]);
  }

  SUBCASE("formal symmetry implies measured symmetry") {
    const auto q = QuadratureSpec::box(2, 20);
    const auto law = law2("u_1*u_11");
    const auto uu = expression_field(2, "sin(x + t) + 0.5*x*x");
    const auto grid = Grid({Axis{0.1, 0.9, 3}, Axis{0.1, 0.9, 3}});
    const auto sys = determining_system(law, id, {uu}, grid);
    for (double v : sys) CHECK(std::abs(v) < 1e-12);
    const LawOperator op(law);
    const auto r = symmetry_defect(op, identity_link(2), VectorField{uu}, identity_flow(2),
                                   VectorField{expression_field(2, "sin(pi*x)*sin(pi*t)")},
                                   VectorField{expression_field(2, "sin(2*pi*x)*sin(pi*t)")},
                                   SymmetryVariant::incompressible, q);
    CHECK(std::abs(r.defect) < 1e-6);
  }

  CHECK_THROWS_AS(determining_residual(fixed_heat_law(1.0), id,
                                       ScalarField(SampledField::sample(u, Grid({Axis{0, 1, 6}, Axis{0, 1, 6}}), 2)), {0.5, 0.5}),
                  std::invalid_argument);
}

TEST_CASE("fitting symmetrizing flows") {
  const auto grid = Grid({Axis{0.1, 0.9, 3}, Axis{0.1, 0.9, 3}});
  const std::vector<ScalarField> samples{expression_field(2, "0.5*sin(x + t) + 0.2"),
                                         expression_field(2, "0.3*cos(2*x)*exp(-t) + 0.1*x")};

  SUBCASE("potential law needs no flow") {
    const auto family = AlgebraicFlowAnsatz::from_expressions(2, {"t", "x + th0*u + th1*u*x"}, {0.0, 0.0});
    const auto r = fit_symmetrizing_flow(law2("u_00 + u_11"), family, samples, grid);
    CHECK(r.status == FitStatus::converged);
    CHECK(r.residual_norm < 1e-10);
    CHECK(r.theta == std::vector<double>{0.0, 0.0});
  }

  SUBCASE("inert parameter") {
    const auto family = AlgebraicFlowAnsatz::from_expressions(2, {"t", "x + 0*th0"}, {0.0});
    const auto r = fit_symmetrizing_flow(intrinsic_heat_law(0.5), family, samples, grid);
    CHECK(r.status == FitStatus::no_convergence);
    CHECK(r.residual_norm == r.initial_norm);
    for (const auto& t : r.trace) CHECK(t.residual_norm == r.initial_norm);
  }

  SUBCASE("heat law with a three-parameter family") {
    const auto family =
        AlgebraicFlowAnsatz::from_expressions(2, {"t", "x + th0*u + th1*u*x + th2*u*t"}, {0.0, 0.0, 0.0});
    FitOptions opts;
    opts.max_iterations = 40;
    const auto r = fit_symmetrizing_flow(intrinsic_heat_law(0.5), family, samples, grid, opts);
    CHECK(r.residual_norm <= r.initial_norm);
    for (std::size_t i = 1; i < r.trace.size(); ++i) CHECK(r.trace[i].residual_norm <= r.trace[i - 1].residual_norm);
    const auto again = fit_symmetrizing_flow(intrinsic_heat_law(0.5), family, samples, grid, opts);
    CHECK(again.theta == r.theta);
    CHECK(again.residual_norm == r.residual_norm);

    std::ostringstream csv;
    r.write_trace_csv(csv);
    CHECK(csv.str().rfind("iteration,residual_norm,damping,accepted\n", 0) == 0);
    CHECK(r.to_json(family.param_names()).find("\"th2\"") != std::string::npos);
  }

  CHECK_THROWS_AS(fit_symmetrizing_flow(law2("u_11"), AlgebraicFlowAnsatz::identity(2), {}, grid), std::invalid_argument);
}
