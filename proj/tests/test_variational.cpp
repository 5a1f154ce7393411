#include <cmath>
#include <numbers>
#include <random>

#include "cflow/errors.hpp"
#include "cflow/variational.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace cflow;

namespace {

const double pi = std::numbers::pi;

// Sigma in [0, 1] at the time slice t = 0.
QuadratureSpec line_quad(int nodes = 32) { return QuadratureSpec::box(2, nodes).sliced(0, 0.0); }

LawOperator poisson_cubic() { return LawOperator(SecondOrderScalarLaw::from_expression(2, "-u_11 + u^3"), "poisson_cubic"); }

VectorField vf(const std::string& text) { return VectorField{expression_field(2, text)}; }

FlowOf rest_flow() {
  const FlowMap id = identity_flow(2);
  return [id](const VectorField&) { return id; };
}

// Random sum of sine modes vanishing at sigma = 0, 1.
VectorField sine_mix(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> c(-1.0, 1.0);
  std::string s;
  for (int k = 1; k <= 3; ++k) s += (k > 1 ? " + " : "") + std::to_string(c(rng)) + "*sin(" + std::to_string(k) + "*pi*x)";
  return vf(s);
}

// phi_hat = k (d phi/d sigma^1, -d phi/d t): divergence free on the rest flow.
class CurlSource final : public MapSource {
 public:
  CurlSource(ScalarField phi, double k) : phi_(std::move(phi)), k_(k) {}
  int dim() const override { return 2; }
  int max_order() const override { return 2; }
  MapJet jet(const Point& p, int order) const override {
    const Jet j = phi_.jet(p, order + 1);
    MapJet m;
    m.dim = 2;
    m.c[0] = scaled(k_, shifted(j, 1));
    m.c[1] = scaled(-k_, shifted(j, 0));
    return m;
  }

 private:
  ScalarField phi_;
  double k_;
};

FlowLink curl_link(double k) {
  FlowLink l = identity_link(2);
  l.kind = "curl";
  l.forward = [k](const VectorField&, const VectorField& phi) {
    return FlowPerturbation(std::make_shared<CurlSource>(phi[0], k));
  };
  return l;
}

double slope(const std::vector<double>& eps, const std::vector<double>& err) {
  return std::log(err.front() / err.back()) / std::log(eps.front() / eps.back());
}

}  // namespace

TEST_CASE("Gauss-Legendre tensor quadrature") {
  const auto r = gauss_legendre(5, -1.0, 2.0);
  double s = 0.0;
  for (int i = 0; i < 5; ++i) s += r.w[i] * std::pow(r.x[i], 9);
  CHECK(s == doctest::Approx((std::pow(2.0, 10) - 1.0) / 10.0).epsilon(1e-13));

  const auto box = QuadratureSpec::box(3, 4, 0.0, 2.0);
  CHECK(integrate(box, [](const Point&) { return 1.0; }) == doctest::Approx(8.0));
  CHECK(integrate(box, [](const Point& p) { return p[0] * p[1] * p[2] * p[2]; }) == doctest::Approx(2.0 * 2.0 * 8.0 / 3.0));
  const auto sl = box.sliced(1, 0.5);
  CHECK(integrate(sl, [](const Point& p) { return p[1]; }) == doctest::Approx(0.5 * 4.0));
  CHECK(quadrature_grid(box).points.size() == 64);

  QuadratureSpec bad = QuadratureSpec::box(2, 1);
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = QuadratureSpec::box(2, 4, 1.0, 1.0);
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("advective bilinear form") {
  const auto id = identity_flow(2);
  const auto one = constant_field(2, 1.0);
  CHECK(advective_form(one, one, id, QuadratureSpec::box(2, 4)) == doctest::Approx(1.0).epsilon(1e-14));
  const auto s = expression_field(2, "sin(pi*x)");
  CHECK(advective_form(s, s, id, line_quad()) == doctest::Approx(0.5).epsilon(1e-13));

  const auto stretch = analytic_flow(
      2, []<class T>(std::span<const T> q, std::span<T> x) { x[0] = q[0]; x[1] = 2.0 * q[1]; }, true);
  CHECK(advective_form(one, one, stretch, line_quad()) == doctest::Approx(2.0).epsilon(1e-14));

  // symmetric, bilinear, positive on a random admissible flow
  std::mt19937_64 rng(3);
  const FlowMap f = cflow::testing::random_flow(2, rng);
  const auto a = expression_field(2, "cos(t + x)"), b = expression_field(2, "t*x - 0.3");
  const auto quad = QuadratureSpec::box(2, 8, -0.5, 0.5);
  CHECK(advective_form(a, b, f, quad) == doctest::Approx(advective_form(b, a, f, quad)).epsilon(1e-15));
  CHECK(advective_form(linear_combination({{2.0, a}, {-3.0, b}}), b, f, quad) ==
        doctest::Approx(2.0 * advective_form(a, b, f, quad) - 3.0 * advective_form(b, b, f, quad)).epsilon(1e-12));
  CHECK(advective_form(a, a, f, quad) > 0.0);

  const auto fold = analytic_flow(2, []<class T>(std::span<const T> q, std::span<T> x) { x[0] = q[0]; x[1] = -q[1]; });
  CHECK_THROWS_AS(advective_form(one, one, fold, QuadratureSpec::box(2, 3)), DegenerateFlowError);
}

TEST_CASE("variation of the advective form") {
  const auto id = identity_flow(2);
  const auto one = pointwise(constant_field(2, 1.0));
  const auto quad = QuadratureSpec::box(2, 6);

  const auto stretch = analytic_perturbation(2, []<class T>(std::span<const T> s, std::span<T> x) {
    x[0] = T(0.0);
    x[1] = s[1];
  });
  CHECK(advective_form_variation(one, one, stretch, id, quad) == doctest::Approx(1.0).epsilon(1e-14));

  const auto swirl = analytic_perturbation(2, []<class T>(std::span<const T> s, std::span<T> x) {
    x[0] = s[1];
    x[1] = -s[0];
  });
  CHECK(std::abs(advective_form_variation(one, one, swirl, id, quad)) < 1e-15);

  // against differencing the form along the perturbation
  std::mt19937_64 rng(21);
  const FlowMap f = cflow::testing::random_flow(2, rng);
  const FlowPerturbation ph = cflow::testing::random_pert(2, rng);
  const auto a = pointwise(expression_field(2, "cos(t + x)")), b = pointwise(expression_field(2, "1 + t*x"));
  const auto q = QuadratureSpec::box(2, 8, -0.5, 0.5);
  const double exact = advective_form_variation(a, b, ph, f, q);
  const double base = advective_form(a, b, f, q);
  std::vector<double> eps{1e-2, 1e-3, 1e-4, 1e-5}, err;
  for (double e : eps) err.push_back(std::abs((advective_form(a, b, perturbed_flow(f, ph, e), q) - base) / e - exact));
  CHECK(slope(eps, err) == doctest::Approx(1.0).epsilon(0.1));
}

TEST_CASE("Gateaux derivatives") {
  const auto op = poisson_cubic();
  const auto id = identity_flow(2);

  SUBCASE("hand linearization") {
    const auto g = gateaux_field_derivative(op, vf("sin(pi*x)"), id, vf("x*(1-x)"), {0.0, 0.5});
    CHECK(g[0] == doctest::Approx(2.75).epsilon(1e-13));
    const auto gf = gateaux_field_derivative(op, vf("sin(pi*x)"), id, vf("x*(1-x)"), {0.0, 0.5}, GateauxMode::fd);
    CHECK(gf[0] == doctest::Approx(2.75).epsilon(1e-8));
  }

  SUBCASE("linear law: derivative is the law applied to the direction") {
    const HeatOperator heat(0.4);
    std::mt19937_64 rng(2);
    const auto flow = analytic_flow(
        2, []<class T>(std::span<const T> s, std::span<T> x) {
          using std::sin;
          x[0] = s[0];
          x[1] = s[1] + 0.1 * sin(s[0] + s[1]);
        }, true);
    const auto phi = vf("exp(t)*cos(2*x)");
    for (std::uint64_t k = 0; k < 5; ++k) {
      const Point p = cflow::testing::random_point(2, k);
      CHECK(gateaux_field_derivative(heat, vf("t*x*x + sin(x)"), flow, phi, p)[0] ==
            doctest::Approx(heat_residual(phi[0], flow, 0.4, p)).epsilon(1e-12));
    }
  }

  SUBCASE("exact and difference modes agree; superposition") {
    const auto law = LawOperator(SecondOrderScalarLaw::from_expression(2, "u_0*u_11 - u*u_1*x_1_1 + sin(u)*x_1_11"));
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 10; ++trial) {
      const FlowMap f = cflow::testing::random_flow(2, rng);
      const FlowPerturbation ph = cflow::testing::random_pert(2, rng);
      const Point p = cflow::testing::random_point(2, 50 + trial);
      const auto u = vf("cos(t - 2*x) + x*t"), phi = vf("sin(3*x)*t + 1"), psi = vf("x*x - t");
      const double e = gateaux_field_derivative(law, u, f, phi, p)[0];
      const double d = gateaux_field_derivative(law, u, f, phi, p, GateauxMode::fd)[0];
      CHECK(std::abs(e - d) <= 1e-5 * std::max(1.0, std::abs(e)));
      const double ef = gateaux_flow_derivative(law, u, f, ph, p)[0];
      const double df = gateaux_flow_derivative(law, u, f, ph, p, GateauxMode::fd)[0];
      CHECK(std::abs(ef - df) <= 1e-5 * std::max(1.0, std::abs(ef)));

      const VectorField combo{linear_combination({{1.5, phi[0]}, {-0.7, psi[0]}})};
      const double lin = 1.5 * e - 0.7 * gateaux_field_derivative(law, u, f, psi, p)[0];
      CHECK(std::abs(gateaux_field_derivative(law, u, f, combo, p)[0] - lin) < 1e-10);
    }
  }

  SUBCASE("flow direction") {
    const double alpha = 0.6;
    const HeatOperator heat(alpha);
    const auto u = vf("sin(2*x)*exp(-t) + x*x*x");
    const Point p{0.2, 0.3};
    CHECK(gateaux_flow_derivative(heat, u, id, zero_perturbation(2), p)[0] == 0.0);
    const auto ph = analytic_perturbation(2, []<class T>(std::span<const T> s, std::span<T> x) {
      x[0] = T(0.0);
      x[1] = s[1];
    });
    const auto ph2 = analytic_perturbation(2, []<class T>(std::span<const T> s, std::span<T> x) {
      x[0] = T(0.0);
      x[1] = 2.0 * s[1];
    });
    // stretching x_sigma by e scales the diffusion term by 1/(1+e)^2
    const double hand = 2 * alpha * u[0].jet(p, 2).h[1][1];
    const double g = gateaux_flow_derivative(heat, u, id, ph, p)[0];
    CHECK(g == doctest::Approx(hand).epsilon(1e-13));
    CHECK(gateaux_flow_derivative(heat, u, id, ph, p, GateauxMode::fd)[0] == doctest::Approx(hand).epsilon(1e-5));
    CHECK(std::abs(gateaux_flow_derivative(heat, u, id, ph2, p)[0] - 2 * g) < 1e-10);
  }
}

TEST_CASE("homotopies") {
  const VectorField u0 = vf("x*(1-x)"), u1 = vf("sin(pi*x)"), w = vf("sin(2*pi*x)*t");
  for (const Homotopy& h : {Homotopy::straight_line(u0, u1), Homotopy::quadratic_detour(u0, u1, w)}) {
    for (std::uint64_t k = 0; k < 5; ++k) {
      const Point p = cflow::testing::random_point(2, k);
      CHECK(std::abs(h.eval(0.0)[0].value(p) - u0[0].value(p)) < 1e-12);
      CHECK(std::abs(h.eval(1.0)[0].value(p) - u1[0].value(p)) < 1e-12);
    }
    const Point p{0.3, 0.4};
    std::vector<double> steps{1e-2, 1e-3}, err;
    for (double e : steps)
      err.push_back(std::abs((h.eval(0.4 + e)[0].value(p) - h.eval(0.4 - e)[0].value(p)) / (2 * e) - h.deriv(0.4)[0].value(p)));
    CHECK((err.back() < 1e-12 || slope(steps, err) > 1.9));
  }
}

TEST_CASE("path integrals and actions") {
  const auto op = poisson_cubic();
  const auto quad = line_quad();
  const VectorField zero = vf("0"), u = vf("sin(pi*x)");
  const double oracle = pi * pi / 4 + 3.0 / 32.0;

  CHECK(path_integral(op, rest_flow(), Homotopy::straight_line(u, u), quad) == 0.0);
  CHECK(build_action(op, rest_flow(), u, u, quad) == 0.0);

  const double a1 = build_action(op, rest_flow(), zero, u, quad);
  CHECK(std::abs(a1 - oracle) < 1e-10);
  const double a2 = path_integral(op, rest_flow(), Homotopy::quadratic_detour(zero, u, vf("3*x*(1-x)*cos(x)")), quad);
  CHECK(std::abs(a1 - a2) < 1e-6);

  const LawOperator lin(SecondOrderScalarLaw::from_expression(2, "-u_11"));
  CHECK(build_action(lin, rest_flow(), zero, u, quad) == doctest::Approx(pi * pi / 4).epsilon(1e-12));
}

TEST_CASE("stationarity") {
  const auto quad = line_quad();
  std::mt19937_64 rng(4);
  std::vector<VectorField> dirs;
  for (int i = 0; i < 5; ++i) dirs.push_back(sine_mix(rng));

  SUBCASE("symmetric operator") {
    const auto r = stationarity_check(poisson_cubic(), rest_flow(), vf("sin(pi*x) + 0.5*sin(2*pi*x)"), dirs, quad);
    CHECK(r.defects.size() == 5);
    CHECK(r.max_defect < 1e-6);
  }

  SUBCASE("manufactured solution is a stationary point") {
    const LawOperator op(SecondOrderScalarLaw::from_expression(2, "-u_11 + u^3 - pi^2*sin(pi*x) - sin(pi*x)^3"));
    const VectorField u = vf("sin(pi*x)");
    const auto r = stationarity_check(op, rest_flow(), u, dirs, quad);
    CHECK(r.max_defect < 1e-6);
    for (const auto& d : dirs) {
      const double dA = (build_action(op, rest_flow(), vf("0"), VectorField{linear_combination({{1.0, u[0]}, {1e-4, d[0]}})}, quad) -
                         build_action(op, rest_flow(), vf("0"), VectorField{linear_combination({{1.0, u[0]}, {-1e-4, d[0]}})}, quad)) /
                        2e-4;
      CHECK(std::abs(dA) < 1e-6);
    }
  }

  SUBCASE("heat law is not potential") {
    const HeatOperator heat(0.5);
    const auto q = QuadratureSpec::box(2, 16);
    const std::vector<VectorField> d2{vf("sin(pi*x)*sin(pi*t)"), vf("sin(2*pi*x)*sin(3*pi*t)")};
    const auto r = stationarity_check(heat, rest_flow(), vf("sin(pi*x)*sin(2*pi*t)"), d2, q);
    CHECK(r.max_defect > 1e-3);
  }
}

TEST_CASE("symmetry defect") {
  const auto id = identity_flow(2);
  const FlowLink rest = identity_link(2);

  SUBCASE("self-adjoint operator") {
    const LawOperator lap(SecondOrderScalarLaw::from_expression(2, "-u_11"));
    std::mt19937_64 rng(6);
    for (int i = 0; i < 5; ++i) {
      const auto r = symmetry_defect(lap, rest, vf("sin(pi*x)"), id, sine_mix(rng), sine_mix(rng),
                                     SymmetryVariant::classical, line_quad());
      CHECK(std::abs(r.defect) < 1e-8);
      CHECK(r.defect == r.lhs - r.rhs);
    }
  }

  SUBCASE("heat law") {
    const HeatOperator heat(0.5);
    const auto q = QuadratureSpec::box(2, 24);
    // the mixed-frequency pair has a nonzero time-derivative coupling
    const auto r = symmetry_defect(heat, rest, vf("sin(pi*x)*t"), id, vf("sin(pi*x)*sin(pi*t)"),
                                   vf("sin(pi*x)*sin(2*pi*t)"), SymmetryVariant::classical, q);
    CHECK(r.defect == doctest::Approx(16.0 / 3.0).epsilon(1e-10));
    CHECK(r.normalization == doctest::Approx(0.25).epsilon(1e-12));
    // modes sharing the time profile are orthogonal in the time term
    const auto same_t = symmetry_defect(heat, rest, vf("sin(pi*x)*t"), id, vf("sin(pi*x)*sin(pi*t)"),
                                        vf("sin(2*pi*x)*sin(pi*t)"), SymmetryVariant::classical, q);
    CHECK(std::abs(same_t.defect) < 1e-12);
  }

  SUBCASE("divergence-free link: full and incompressible variants coincide") {
    const HeatOperator heat(0.5);
    const FlowLink curl = curl_link(0.3);
    const auto q = QuadratureSpec::box(2, 12);
    const VectorField u = vf("sin(pi*x)*(1 + t*t)"), phi = vf("sin(pi*x)*sin(pi*t)"), psi = vf("sin(2*pi*x)*sin(pi*t)*t");
    const auto full = symmetry_defect(heat, curl, u, id, phi, psi, SymmetryVariant::full, q);
    const auto inc = symmetry_defect(heat, curl, u, id, phi, psi, SymmetryVariant::incompressible, q);
    CHECK(std::abs(full.defect - inc.defect) < 1e-10);
    CHECK(std::abs(full.lhs - inc.lhs) < 1e-10);
  }

  SUBCASE("second-order expansion of the circulation") {
    const LawOperator law(intrinsic_heat_law(0.5));
    const FlowLink link = algebraic_link(AlgebraicFlowAnsatz::from_expressions(2, {"t", "x + 0.2*u*x + 0.1*u*u"}, {}));
    const auto q = QuadratureSpec::box(2, 10);
    const VectorField u = vf("0.5*sin(pi*x) + t"), phi = vf("cos(x + t)"), psi = vf("x*t + 1");
    const FlowMap flow = link.flow_of(u);
    auto form = [&](const VectorField& w) {
      const FlowMap fw = link.flow_of(w);
      return advective_form([&](const Point& p) { return law.residual(w, fw, p); }, pointwise(psi), fw, q);
    };
    const double base = form(u);
    const double lin = advective_form(linearized_operator(law, link, u, flow, phi), pointwise(psi), flow, q) +
                       advective_form_variation([&](const Point& p) { return law.residual(u, flow, p); }, pointwise(psi),
                                                link.forward(u, phi), flow, q);
    std::vector<double> eps{1e-1, 3e-2, 1e-2, 3e-3}, err;
    for (double e : eps) err.push_back(std::abs(form(VectorField{linear_combination({{1.0, u[0]}, {e, phi[0]}})}) - base - e * lin));
    CHECK(slope(eps, err) >= 1.9);
  }

  SUBCASE("report serialization") {
    SymmetryReport r;
    r.variant = SymmetryVariant::fixed_flow;
    r.lhs = 1.0;
    r.rhs = 0.5;
    r.defect = 0.5;
    CHECK(r.to_json() == R"({"variant":"fixed-flow","defect":0.5,"lhs":1.0,"rhs":0.5,"normalization":1.0})");
    CHECK(parse_symmetry_variant("classical") == SymmetryVariant::classical);
    CHECK_THROWS(parse_symmetry_variant("other"));
  }
}
