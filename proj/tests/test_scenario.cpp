#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "cflow/errors.hpp"
#include "cflow/scenario.hpp"
#include "doctest.h"

using namespace cflow;
using json = nlohmann::json;

namespace {

json run_json(const std::string& yaml, const RunOptions& opts = {}) {
  return json::parse(run_scenario(Scenario::parse(yaml), opts).to_json());
}

const json& check(const json& rep, const std::string& name) {
  for (const auto& c : rep["checks"])
    if (c["name"] == name) return c;
  throw std::runtime_error("no check " + name);
}

int config_line(const std::string& yaml) {
  try {
    Scenario::parse(yaml);
  } catch (const ConfigError& e) {
    return e.line();
  }
  return -1;
}

std::string config_field(const std::string& yaml) {
  try {
    Scenario::parse(yaml);
  } catch (const ConfigError& e) {
    return e.field();
  }
  return "<none>";
}

const char* kHeat = R"Y(
name: heat
dimension: 2
fields: {u: "exp(-t)*sin(x) + 0.5*x*x*t"}
law: {kind: heat, alpha: 1}
checks:
  - check: tonti
    expect: fail
    grid: {nodes: 3, lo: 0.2, hi: 0.8}
  - check: symmetry_defect
    variant: classical
    expect: fail
    probes:
      - {phi: "sin(pi*x)*sin(pi*t)", psi: "sin(pi*x)*sin(2*pi*t)"}
)Y";

}  // namespace

TEST_CASE("scenario: heat law documents its known asymmetry") {
  const auto rep = run_json(kHeat);
  const auto& t = check(rep, "tonti");
  CHECK(t["status"] == "info");
  CHECK(t["measured"]["residual"][0] == 1.0);
  CHECK(t["measured"]["residual"][1] == 0.0);
  const auto& s = check(rep, "symmetry_defect");
  CHECK(s["status"] == "info");
  CHECK(s["measured"]["max_abs_defect"].get<double>() == doctest::Approx(16.0 / 3.0).epsilon(1e-10));
  CHECK(rep["summary"]["exit_code"] == 0);
  CHECK(rep["checks"].size() == 2);
}

TEST_CASE("scenario: an expected failure that passes is a failure") {
  const auto rep = run_json(R"Y(
name: lap
dimension: 2
fields: {u: "sin(x)*t"}
law: {kind: custom, expression: "u_00 + u_11"}
checks:
  - {check: tonti, expect: fail}
)Y");
  CHECK(check(rep, "tonti")["status"] == "fail");
  CHECK(rep["summary"]["exit_code"] == 1);
}

TEST_CASE("scenario: identity geometry and rest-flow reduction") {
  const auto rep = run_json(R"Y(
name: id
dimension: 3
flow: identity
fields: {v: ["sin(x)*cos(y)*exp(-2*t/50)", "-cos(x)*sin(y)*exp(-2*t/50)"], p: "0.25*(cos(2*x) + cos(2*y))*exp(-4*t/50)"}
unknown: [v, p]
law: {kind: navier_stokes, reynolds: 50}
checks:
  - {check: geometry_identities, points: 20}
  - {check: intrinsic_reduction, points: 20, residual_tolerance: 1e-7}
)Y");
  const auto& g = check(rep, "geometry_identities");
  CHECK(g["status"] == "pass");
  CHECK(g["measured"]["jacobian_identity"] == 0.0);
  CHECK(g["measured"]["cofactor"] == 0.0);
  CHECK(g["measured"]["metric_determinant"] == 0.0);
  const auto& r = check(rep, "intrinsic_reduction");
  CHECK(r["status"] == "pass");
  CHECK(r["measured"]["reference"] == "cartesian");
  CHECK(r["measured"]["max_abs_difference"].get<double>() < 1e-12);
}

TEST_CASE("scenario: curvilinear flows") {
  SUBCASE("expression flow, heat law compared with its pushforward") {
    const auto rep = run_json(R"Y(
name: stretched
dimension: 2
flow:
  kind: expression
  components: ["t", "x + 0.1*x*x + 0.05*sin(t + x)"]
  time_identity: true
fields: {u: "exp(-t)*sin(3*x) + t*x"}
law: {kind: heat, alpha: 0.3}
checks:
  - {check: geometry_identities, points: 30}
  - {check: intrinsic_reduction, points: 30}
)Y");
    CHECK(check(rep, "geometry_identities")["status"] == "pass");
    CHECK(check(rep, "geometry_identities")["measured"]["jacobian_identity"].get<double>() < 1e-12);
    CHECK(check(rep, "intrinsic_reduction")["measured"]["reference"] == "pushforward");
    CHECK(check(rep, "intrinsic_reduction")["status"] == "pass");
  }

  SUBCASE("integrated flow") {
    const auto rep = run_json(R"Y(
name: shear
dimension: 2
quadrature: {lo: 0.2, hi: 0.8}
flow:
  kind: integrated
  velocity: ["0.3*sin(x)"]
  labels: {nodes: 9, lo: 0, hi: 1}
  t0: 0
  t1: 1
  steps: 50
fields: {u: "sin(x)"}
law: {kind: heat}
checks:
  - {check: geometry_identities, points: 10, tolerance: 1e-6}
)Y");
    CHECK(check(rep, "geometry_identities")["status"] == "pass");
    CHECK(rep["scenario"]["flow"]["integrator"] == "rk4");
    CHECK_FALSE(rep["scenario"]["flow"].contains("noise"));
  }

  SUBCASE("noisy integrated flow records its noise model") {
    const auto rep = run_json(R"Y(
name: noisy
dimension: 2
quadrature: {lo: 0.3, hi: 0.7}
flow: {kind: integrated, velocity: ["0.2"], steps: 40, noise: {scale: 0.01, seed: 4}}
fields: {u: "sin(x)"}
law: {kind: heat}
checks:
  - {check: geometry_identities, points: 5, tolerance: 1e-4}
)Y");
    CHECK(rep["scenario"]["flow"]["noise"]["seed"] == 4);
    CHECK(check(rep, "geometry_identities")["status"] == "pass");
  }

  SUBCASE("flow integration blowing up is a check failure, not a config error") {
    const auto rep = run_json(R"Y(
name: blow
dimension: 2
flow: {kind: integrated, velocity: ["50*x*x"], t1: 1, steps: 20}
fields: {u: "x"}
law: {kind: heat}
checks:
  - {check: geometry_identities, points: 3}
)Y");
    CHECK(check(rep, "geometry_identities")["status"] == "fail");
    CHECK(check(rep, "geometry_identities")["message"].get<std::string>().find("setup failed") == 0);
  }
}

TEST_CASE("scenario: potential operator") {
  const auto rep = run_json(R"Y(
name: pc
dimension: 2
quadrature: {nodes: 32, fixed: {t: 0}}
fields: {u: "sin(pi*x)"}
law: {kind: custom, expression: "-u_11 + u^3"}
checks:
  - check: symmetry_defect
    variant: classical
    probes: [{phi: "sin(pi*x)", psi: "sin(3*pi*x)"}]
  - {check: path_independence, detour: "x*(1-x)", expected_action: 2.5611511002723395}
  - {check: stationarity, directions: ["sin(pi*x)", "x*x*(1-x)"]}
)Y");
  for (const auto& c : rep["checks"]) CHECK(c["status"] == "pass");
  CHECK(check(rep, "path_independence")["measured"]["action_straight"].get<double>() ==
        doctest::Approx(std::numbers::pi * std::numbers::pi / 4 + 3.0 / 32).epsilon(1e-12));
}

TEST_CASE("scenario: determining equations and fitting") {
  const auto rep = run_json(R"Y(
name: det
dimension: 2
flow:
  kind: ansatz
  components: ["t", "x + a*u + b*u*x"]
  parameters: {a: 0, b: 0}
fields:
  u: "0.5*sin(x + t) + 0.2"
  w: "0.3*cos(2*x)*exp(-t) + 0.1*x"
law: {kind: custom, expression: "u_00 + u_11"}
checks:
  - {check: determining_residual, samples: [u, w]}
  - {check: fit, samples: [u, w], grid: {nodes: 3, lo: 0.1, hi: 0.9}}
)Y");
  const auto& d = check(rep, "determining_residual");
  CHECK(d["status"] == "pass");
  CHECK(d["measured"]["nodes"] == 9);
  CHECK(d["measured"]["connection"] == "composed");
  CHECK(d["measured"]["max_abs_R_other_connection"] == 0.0);  // theta = 0: both connections vanish
  const auto& f = check(rep, "fit");
  CHECK(f["status"] == "pass");
  CHECK(f["measured"]["theta"]["a"] == 0.0);
  CHECK(f["measured"]["residual_norm"].get<double>() < 1e-10);

  const auto heat = run_json(R"Y(
name: heatfit
dimension: 2
flow: {kind: ansatz, components: ["t", "x + th0*u + th1*u*x + th2*u*t"], parameters: {th0: 0, th1: 0, th2: 0}}
fields: {u: "0.5*sin(x + t) + 0.2"}
law: {kind: heat, alpha: 0.5}
checks:
  - {check: fit, max_iterations: 15, expect: fail}
)Y");
  const auto& hf = check(heat, "fit");
  CHECK(hf["status"] == "info");
  CHECK(hf["measured"]["monotone"] == true);
  CHECK(hf["measured"]["residual_norm"].get<double>() <= hf["measured"]["initial_norm"].get<double>());
}

TEST_CASE("scenario: reports are deterministic") {
  const std::string yaml = R"Y(
name: det
dimension: 2
seed: 9
fields: {u: "sin(x)*exp(t)"}
law: {kind: heat}
checks:
  - {check: geometry_identities, points: 5}
  - {check: intrinsic_reduction, points: 5}
  - {check: tonti, expect: fail}
)Y";
  auto strip = [](const std::string& s) {
    std::string out, line;
    std::istringstream in(s);
    while (std::getline(in, line))
      if (line.find("runtime_ms") == std::string::npos) out += line + "\n";
    return out;
  };
  const auto sc = Scenario::parse(yaml);
  const auto a = strip(run_scenario(sc).to_json());
  CHECK(a == strip(run_scenario(sc).to_json()));
  CHECK(a == strip(run_scenario(sc, {.parallel = true}).to_json()));
  const auto other = json::parse(run_scenario(sc, {.seed = 10}).to_json());
  CHECK(other["environment"]["seed"] == 10);
  CHECK(json::parse(run_scenario(sc).to_json())["environment"]["seed"] == 9);
  CHECK(json::parse(run_scenario(sc, {.quad_nodes = 6}).to_json())["environment"]["quadrature_nodes"] == 6);
}

TEST_CASE("scenario: tables") {
  const auto rep = run_scenario(Scenario::parse(kHeat));
  REQUIRE(rep.tables.count("tonti_tonti.csv"));
  CHECK(rep.tables.at("tonti_tonti.csv").rfind("sample,node,s0,s1,T0,T1\n", 0) == 0);
  CHECK(rep.tables.at("symmetry_defect_symmetry.csv").rfind("pair,lhs,rhs,defect,normalization\n", 0) == 0);
  const auto dir = std::filesystem::temp_directory_path() / "cflow_tables_test";
  std::filesystem::remove_all(dir);
  rep.write_tables(dir.string());
  CHECK(std::filesystem::exists(dir / "tonti_tonti.csv"));
  std::filesystem::remove_all(dir);
}

TEST_CASE("scenario: config errors carry field and line") {
  const std::string head = "name: x\ndimension: 2\nfields: {u: \"sin(x)\"}\nlaw: {kind: heat}\n";
  CHECK(config_line(head + "checks:\n  - check: nope\n") == 6);
  CHECK(config_field(head + "checks:\n  - check: nope\n") == "checks[0].check");
  CHECK(config_line(head + "checks:\n  - check: tonti\n    colour: red\n") == 7);
  CHECK(config_field(head + "checks:\n  - check: tonti\n    points: 3\n") == "checks[0].points");
  CHECK(config_field(head + "checks:\n  - {check: tonti}\n  - {check: tonti}\n") == "checks[1].name");
  CHECK(config_field(head + "checks: []\n") == "checks");
  CHECK(config_field("name: x\ndimension: 2\nfields: {u: \"sin(y)\"}\nlaw: {kind: heat}\nchecks: [{check: tonti}]\n") ==
        "fields.u");
  CHECK(config_line("name: x\ndimension: 2\nfields: {u: \"sin(y)\"}\nlaw: {kind: heat}\nchecks: [{check: tonti}]\n") == 3);
  CHECK(config_field("name: x\ndimension: 5\nlaw: {kind: heat}\nchecks: [{check: tonti}]\n") == "dimension");
  CHECK(config_field("name: x\ndimension: 3\nfields: {u: x}\nlaw: {kind: heat}\nchecks: [{check: tonti}]\n") == "law");
  CHECK(config_field("name: x\ndimension: two\nlaw: {kind: heat}\nchecks: [{check: tonti}]\n") == "dimension");
  CHECK(config_field(head + "unknown: v\nchecks: [{check: tonti}]\n") == "unknown");
  CHECK(config_field(head + "link: algebraic\nchecks: [{check: tonti}]\n") == "link");
  CHECK(config_field(head + "checks: [{check: fit}]\n") == "checks[0]");
  CHECK(config_field(head + "checks: [{check: symmetry_defect, variant: sideways, probes: [{phi: x, psi: x}]}]\n") ==
        "checks[0].variant");
  CHECK(config_field(head + "checks: [{check: symmetry_defect, probes: [{phi: [x, x], psi: x}]}]\n") ==
        "checks[0].probes.phi");
  CHECK(config_field(head + "checks: [{check: stationarity}]\n") == "checks[0].directions");
  CHECK(config_field("name: [x\n") == "");
  CHECK(config_line("name: x\ndimension: 2\nlaw: {kind: heat}\nchecks:\n  - check: tonti\n   bad: indent\n") > 0);
  CHECK_THROWS_AS(Scenario::load_file("/nonexistent/scenario.yaml"), ConfigError);
}

TEST_CASE("scenario: check catalogue") {
  const auto& all = available_checks();
  CHECK(all.size() == 8);
  CHECK(all.front().kind == "geometry_identities");
  CHECK(all.back().kind == "fit");
}
