#include "cflow/scenario.hpp"

#include <yaml-cpp/yaml.h>

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <mutex>
#include <random>
#include <set>
#include <sstream>

#include "cflow/determine.hpp"
#include "cflow/errors.hpp"
#include "cflow/intrinsic.hpp"
#include "cflow/quadrature.hpp"
#include "cflow/variational.hpp"

#ifndef CFLOW_VERSION
#define CFLOW_VERSION "0.0.0"
#endif

namespace cflow {

using json = nlohmann::ordered_json;

// --- parsed config ----------------------------------------------------------------------

struct Text {
  std::string s;
  std::string path;
  int line = 0;
};
using Texts = std::vector<Text>;

struct QuadCfg {
  int nodes = 16;
  double lo = 0.0, hi = 1.0;
  int lambda_nodes = 16;
  std::vector<std::pair<int, double>> fixed;
};

struct FlowCfg {
  std::string kind = "identity";
  Texts comps;
  bool time_identity = true;
  // integrated
  Texts velocity;
  int label_nodes = 9;
  double label_lo = 0.0, label_hi = 1.0;
  double t0 = 0.0, t1 = 1.0;
  int steps = 100;
  double noise = 0.0;
  std::uint64_t noise_seed = 0;
  // ansatz
  std::vector<std::string> param_names;
  std::vector<double> theta;
  int line = 0;
};

struct LawCfg {
  std::string kind;
  double alpha = 1.0;
  double re = 1.0;
  Text expr;
  std::string form = "intrinsic";
  int line = 0;
};

struct GridCfg {
  int nodes = 3;
  std::optional<double> lo, hi;
};

struct CheckCfg {
  std::string name, kind;
  bool expect_fail = false;
  std::optional<double> tolerance;
  int line = 0;
  int points = 50;
  std::optional<double> residual_tolerance;
  SymmetryVariant variant = SymmetryVariant::full;
  std::vector<std::pair<Texts, Texts>> probes;
  std::vector<Texts> directions;
  Texts from, detour;
  std::optional<double> expected_action;
  double action_tolerance = 1e-5;
  std::vector<std::string> samples;
  GridCfg grid;
  int max_iterations = 100;
  bool frozen = false;
};

struct ScenarioConfig {
  std::string source;
  std::string name;
  int dim = 2;
  std::uint64_t seed = 0;
  QuadCfg quad;
  FlowCfg flow;
  std::string link;
  std::map<std::string, Texts> fields;
  std::vector<std::string> unknown{"u"};
  LawCfg law;
  std::vector<CheckCfg> checks;
  std::vector<std::string> check_names;
  std::string report_path, tables_dir;
};

namespace {

const std::vector<CheckInfo> kChecks{
    {"geometry_identities", "Jacobian derivative identity, cofactor vs adjugate, det(g) vs J^2 at random points"},
    {"intrinsic_reduction", "law residual in flow coordinates vs the Cartesian residual (identity flow) or its pushforward"},
    {"symmetry_defect", "normalized defect of the potential-operator condition on probe pairs"},
    {"path_independence", "action along a straight and a detoured homotopy"},
    {"stationarity", "directional derivative of the action vs the operator"},
    {"determining_residual", "residual of the determining equations over a node grid"},
    {"tonti", "fixed-coordinate formal-symmetry residual over a node grid"},
    {"fit", "least-squares fit of ansatz parameters to the determining equations"},
};

const std::map<std::string, std::set<std::string>> kCheckKeys{
    {"geometry_identities", {"points"}},
    {"intrinsic_reduction", {"points", "residual_tolerance"}},
    {"symmetry_defect", {"variant", "probes"}},
    {"path_independence", {"from", "detour", "expected_action", "action_tolerance"}},
    {"stationarity", {"directions"}},
    {"determining_residual", {"samples", "grid", "frozen_connection"}},
    {"tonti", {"samples", "grid"}},
    {"fit", {"samples", "grid", "max_iterations", "frozen_connection"}},
};

int line_of(const YAML::Node& n) {
  const auto m = n.Mark();
  return m.line >= 0 ? m.line + 1 : 0;
}

// A mapping node that remembers which keys were looked at, so stray keys can be reported.
class MapReader {
 public:
  MapReader(const YAML::Node& n, std::string path) : n_(n), path_(std::move(path)) {
    if (!n.IsMap()) throw ConfigError(path_, "expected a mapping", line_of(n));
  }

  int line() const { return line_of(n_); }
  const std::string& path() const { return path_; }
  std::string sub(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  bool has(const std::string& key) {
    seen_.insert(key);
    const YAML::Node& c = n_;
    return static_cast<bool>(c[key]);
  }
  YAML::Node at(const std::string& key) {
    if (!has(key)) throw ConfigError(sub(key), "required", line());
    const YAML::Node& c = n_;
    return c[key];
  }

  template <class T>
  T scalar(const std::string& key) {
    const YAML::Node v = at(key);
    return convert<T>(v, sub(key));
  }
  template <class T>
  T scalar(const std::string& key, T fallback) {
    return has(key) ? scalar<T>(key) : fallback;
  }

  template <class T>
  static T convert(const YAML::Node& v, const std::string& path) {
    if (!v.IsScalar()) throw ConfigError(path, "expected a scalar", line_of(v));
    try {
      return v.as<T>();
    } catch (const YAML::Exception&) {
      if constexpr (std::is_same_v<T, bool>) throw ConfigError(path, "expected true or false", line_of(v));
      else if constexpr (std::is_integral_v<T>) throw ConfigError(path, "expected an integer", line_of(v));
      else throw ConfigError(path, "expected a number", line_of(v));
    }
  }

  void allow(const std::set<std::string>& keys) { seen_.insert(keys.begin(), keys.end()); }

  void finish() const {
    for (const auto& kv : n_) {
      const auto key = kv.first.as<std::string>();
      if (!seen_.count(key)) throw ConfigError(sub(key), "unknown key", line_of(kv.first));
    }
  }

 private:
  YAML::Node n_;
  std::string path_;
  std::set<std::string> seen_;
};

Text text_of(const YAML::Node& n, const std::string& path) {
  return {MapReader::convert<std::string>(n, path), path, line_of(n)};
}

// A scalar expression or a list of component expressions.
Texts texts_of(const YAML::Node& n, const std::string& path) {
  Texts out;
  if (n.IsSequence()) {
    if (n.size() == 0) throw ConfigError(path, "empty component list", line_of(n));
    for (std::size_t i = 0; i < n.size(); ++i) out.push_back(text_of(n[i], path + "[" + std::to_string(i) + "]"));
  } else {
    out.push_back(text_of(n, path));
  }
  return out;
}

std::vector<std::string> names_of(const YAML::Node& n, const std::string& path) {
  std::vector<std::string> out;
  for (const auto& t : texts_of(n, path)) out.push_back(t.s);
  return out;
}

int axis_index(const std::string& name, int dim, const std::string& path, int line) {
  static const std::vector<std::string> alias{"t", "x", "y", "z"};
  for (int i = 0; i < dim; ++i)
    if (name == alias[i] || name == "s" + std::to_string(i) || name == std::to_string(i)) return i;
  throw ConfigError(path, "no axis '" + name + "' in dimension " + std::to_string(dim), line);
}

QuadCfg parse_quadrature(const YAML::Node& n, int dim) {
  MapReader r(n, "quadrature");
  QuadCfg q;
  q.nodes = r.scalar<int>("nodes", q.nodes);
  q.lo = r.scalar<double>("lo", q.lo);
  q.hi = r.scalar<double>("hi", q.hi);
  q.lambda_nodes = r.scalar<int>("lambda_nodes", q.lambda_nodes);
  if (r.has("fixed")) {
    MapReader f(r.at("fixed"), "quadrature.fixed");
    for (const auto& kv : r.at("fixed")) {
      const auto key = kv.first.as<std::string>();
      f.allow({key});
      q.fixed.emplace_back(axis_index(key, dim, f.sub(key), line_of(kv.first)),
                           MapReader::convert<double>(kv.second, f.sub(key)));
    }
  }
  r.finish();
  return q;
}

FlowCfg parse_flow(const YAML::Node& n) {
  FlowCfg f;
  if (n.IsScalar()) {
    f.kind = n.as<std::string>();
    f.line = line_of(n);
    if (f.kind != "identity") throw ConfigError("flow", "only 'identity' may be given without parameters", f.line);
    return f;
  }
  MapReader r(n, "flow");
  f.line = r.line();
  f.kind = r.scalar<std::string>("kind");
  if (f.kind == "identity") {
  } else if (f.kind == "expression") {
    f.comps = texts_of(r.at("components"), "flow.components");
    f.time_identity = r.scalar<bool>("time_identity", false);
  } else if (f.kind == "integrated") {
    f.velocity = texts_of(r.at("velocity"), "flow.velocity");
    if (r.has("labels")) {
      MapReader l(r.at("labels"), "flow.labels");
      f.label_nodes = l.scalar<int>("nodes", f.label_nodes);
      f.label_lo = l.scalar<double>("lo", f.label_lo);
      f.label_hi = l.scalar<double>("hi", f.label_hi);
      l.finish();
    }
    f.t0 = r.scalar<double>("t0", f.t0);
    f.t1 = r.scalar<double>("t1", f.t1);
    f.steps = r.scalar<int>("steps", f.steps);
    if (r.has("noise")) {
      MapReader z(r.at("noise"), "flow.noise");
      f.noise = z.scalar<double>("scale");
      f.noise_seed = z.scalar<std::uint64_t>("seed", 0);
      z.finish();
    }
    if (f.steps < 1) throw ConfigError("flow.steps", "must be positive", r.line());
    if (f.label_nodes < 4) throw ConfigError("flow.labels.nodes", "at least 4 label nodes per axis", r.line());
  } else if (f.kind == "ansatz") {
    f.comps = texts_of(r.at("components"), "flow.components");
    f.time_identity = r.scalar<bool>("time_identity", false);
    if (r.has("parameters")) {
      MapReader p(r.at("parameters"), "flow.parameters");
      for (const auto& kv : r.at("parameters")) {
        const auto key = kv.first.as<std::string>();
        p.allow({key});
        f.param_names.push_back(key);
        f.theta.push_back(MapReader::convert<double>(kv.second, p.sub(key)));
      }
    }
  } else {
    throw ConfigError("flow.kind", "unknown flow kind '" + f.kind + "' (identity, expression, integrated, ansatz)",
                      r.line());
  }
  r.finish();
  return f;
}

LawCfg parse_law(const YAML::Node& n) {
  MapReader r(n, "law");
  LawCfg l;
  l.line = r.line();
  l.kind = r.scalar<std::string>("kind");
  if (l.kind == "heat") {
    l.alpha = r.scalar<double>("alpha", l.alpha);
    l.form = r.scalar<std::string>("form", l.form);
    if (l.form != "intrinsic" && l.form != "fixed")
      throw ConfigError("law.form", "expected 'intrinsic' or 'fixed'", r.line());
  } else if (l.kind == "navier_stokes") {
    l.re = r.scalar<double>("reynolds");
    if (!(l.re > 0)) throw ConfigError("law.reynolds", "must be positive", r.line());
  } else if (l.kind == "custom") {
    l.expr = text_of(r.at("expression"), "law.expression");
  } else {
    throw ConfigError("law.kind", "unknown law '" + l.kind + "' (heat, navier_stokes, custom)", r.line());
  }
  r.finish();
  return l;
}

GridCfg parse_grid(const YAML::Node& n, const std::string& path) {
  MapReader r(n, path);
  GridCfg g;
  g.nodes = r.scalar<int>("nodes", g.nodes);
  if (r.has("lo")) g.lo = r.scalar<double>("lo");
  if (r.has("hi")) g.hi = r.scalar<double>("hi");
  r.finish();
  if (g.nodes < 1) throw ConfigError(r.sub("nodes"), "must be positive", r.line());
  return g;
}

CheckCfg parse_check(const YAML::Node& n, const std::string& path) {
  MapReader r(n, path);
  CheckCfg c;
  c.line = r.line();
  c.kind = r.scalar<std::string>("check");
  const auto keys = kCheckKeys.find(c.kind);
  if (keys == kCheckKeys.end()) throw ConfigError(r.sub("check"), "unknown check '" + c.kind + "'", r.line());
  c.name = r.scalar<std::string>("name", c.kind);
  if (r.has("expect")) {
    const auto e = r.scalar<std::string>("expect");
    if (e != "pass" && e != "fail") throw ConfigError(r.sub("expect"), "expected 'pass' or 'fail'", r.line());
    c.expect_fail = e == "fail";
  }
  if (r.has("tolerance")) c.tolerance = r.scalar<double>("tolerance");
  auto wants = [&](const std::string& key) { return keys->second.count(key) && r.has(key); };

  if (wants("points")) c.points = r.scalar<int>("points");
  if (wants("residual_tolerance")) c.residual_tolerance = r.scalar<double>("residual_tolerance");
  if (wants("variant")) {
    try {
      c.variant = parse_symmetry_variant(r.scalar<std::string>("variant"));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(r.sub("variant"), e.what(), r.line());
    }
  }
  if (wants("probes")) {
    const YAML::Node ps = r.at("probes");
    if (!ps.IsSequence()) throw ConfigError(r.sub("probes"), "expected a list of {phi, psi}", line_of(ps));
    for (std::size_t i = 0; i < ps.size(); ++i) {
      MapReader p(ps[i], r.sub("probes") + "[" + std::to_string(i) + "]");
      c.probes.emplace_back(texts_of(p.at("phi"), p.sub("phi")), texts_of(p.at("psi"), p.sub("psi")));
      p.finish();
    }
  }
  if (wants("directions")) {
    const YAML::Node ds = r.at("directions");
    if (!ds.IsSequence()) throw ConfigError(r.sub("directions"), "expected a list", line_of(ds));
    for (std::size_t i = 0; i < ds.size(); ++i)
      c.directions.push_back(texts_of(ds[i], r.sub("directions") + "[" + std::to_string(i) + "]"));
  }
  if (wants("from")) c.from = texts_of(r.at("from"), r.sub("from"));
  if (wants("detour")) c.detour = texts_of(r.at("detour"), r.sub("detour"));
  if (wants("expected_action")) c.expected_action = r.scalar<double>("expected_action");
  if (wants("action_tolerance")) c.action_tolerance = r.scalar<double>("action_tolerance");
  if (wants("samples")) c.samples = names_of(r.at("samples"), r.sub("samples"));
  if (wants("grid")) c.grid = parse_grid(r.at("grid"), r.sub("grid"));
  if (wants("max_iterations")) c.max_iterations = r.scalar<int>("max_iterations");
  if (wants("frozen_connection")) c.frozen = r.scalar<bool>("frozen_connection");
  r.finish();

  if (c.kind == "symmetry_defect" && c.probes.empty()) throw ConfigError(r.sub("probes"), "required", c.line);
  if (c.kind == "stationarity" && c.directions.empty()) throw ConfigError(r.sub("directions"), "required", c.line);
  if (c.points < 1) throw ConfigError(r.sub("points"), "must be positive", c.line);
  if (c.max_iterations < 1) throw ConfigError(r.sub("max_iterations"), "must be positive", c.line);
  return c;
}

ScenarioConfig parse_config(const YAML::Node& root, const std::string& source) {
  MapReader r(root, "");
  ScenarioConfig cfg;
  cfg.source = source;
  cfg.name = r.scalar<std::string>("name");
  cfg.dim = r.scalar<int>("dimension");
  if (cfg.dim < 2 || cfg.dim > 4) throw ConfigError("dimension", "must be 2, 3 or 4 (time plus 1-3 space)", r.line());
  cfg.seed = r.scalar<std::uint64_t>("seed", 0);
  if (r.has("quadrature")) cfg.quad = parse_quadrature(r.at("quadrature"), cfg.dim);
  if (r.has("flow")) cfg.flow = parse_flow(r.at("flow"));
  cfg.link = r.scalar<std::string>("link", cfg.flow.kind == "ansatz" ? "algebraic" : "fixed");
  if (cfg.link != "fixed" && cfg.link != "algebraic") throw ConfigError("link", "expected 'fixed' or 'algebraic'", r.line());
  if (cfg.link == "algebraic" && cfg.flow.kind != "ansatz")
    throw ConfigError("link", "an algebraic link needs an ansatz flow", r.line());
  if (r.has("fields")) {
    MapReader f(r.at("fields"), "fields");
    for (const auto& kv : r.at("fields")) {
      const auto key = kv.first.as<std::string>();
      f.allow({key});
      cfg.fields[key] = texts_of(kv.second, f.sub(key));
    }
  }
  if (r.has("unknown")) cfg.unknown = names_of(r.at("unknown"), "unknown");
  cfg.law = parse_law(r.at("law"));
  if (r.has("output")) {
    MapReader o(r.at("output"), "output");
    cfg.report_path = o.scalar<std::string>("report", "");
    cfg.tables_dir = o.scalar<std::string>("tables", "");
    o.finish();
  }
  const YAML::Node checks = r.at("checks");
  if (!checks.IsSequence() || checks.size() == 0) throw ConfigError("checks", "expected a non-empty list", line_of(checks));
  std::set<std::string> names;
  for (std::size_t i = 0; i < checks.size(); ++i) {
    cfg.checks.push_back(parse_check(checks[i], "checks[" + std::to_string(i) + "]"));
    const auto& c = cfg.checks.back();
    if (!names.insert(c.name).second)
      throw ConfigError("checks[" + std::to_string(i) + "].name", "duplicate check name '" + c.name + "'", c.line);
    cfg.check_names.push_back(c.name);
  }
  r.finish();
  return cfg;
}

// --- compiled model -----------------------------------------------------------------------

ScalarField compile_scalar(int dim, const Text& t) {
  try {
    return expression_field(dim, t.s);
  } catch (const ExprError& e) {
    throw ConfigError(t.path, e.what(), t.line);
  }
}

VectorField compile_vector(int dim, const Texts& ts) {
  std::vector<ScalarField> comps;
  for (const auto& t : ts) comps.push_back(compile_scalar(dim, t));
  return VectorField(std::move(comps));
}

struct Model {
  int dim = 0;
  std::map<std::string, VectorField> fields;
  VectorField U;
  std::shared_ptr<const IntrinsicOperator> op;
  std::optional<SecondOrderScalarLaw> law;
  std::optional<AlgebraicFlowAnsatz> ansatz;
  FlowLink link;
  FlowMap flow;
  QuadratureSpec quad;
};

QuadratureSpec quadrature_of(const ScenarioConfig& cfg, const RunOptions& opts) {
  QuadratureSpec q = QuadratureSpec::box(cfg.dim, opts.quad_nodes.value_or(cfg.quad.nodes), cfg.quad.lo, cfg.quad.hi);
  q.lambda_nodes = cfg.quad.lambda_nodes;
  for (const auto& [axis, v] : cfg.quad.fixed) q = q.sliced(axis, v);
  try {
    q.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("quadrature", e.what());
  }
  return q;
}

// Everything but the flow integration, which is deferred to run time.
Model compile(const ScenarioConfig& cfg, const RunOptions& opts, bool integrate) {
  Model m;
  m.dim = cfg.dim;
  m.quad = quadrature_of(cfg, opts);
  for (const auto& [name, ts] : cfg.fields) m.fields[name] = compile_vector(cfg.dim, ts);

  std::vector<ScalarField> ucomps;
  for (const auto& name : cfg.unknown) {
    const auto it = m.fields.find(name);
    if (it == m.fields.end()) throw ConfigError("unknown", "no field named '" + name + "'");
    for (const auto& c : it->second.components()) ucomps.push_back(c);
  }
  m.U = VectorField(ucomps);

  const LawCfg& L = cfg.law;
  if (L.kind == "heat") {
    if (cfg.dim != 2) throw ConfigError("law", "the heat law needs dimension 2", L.line);
    m.op = std::make_shared<HeatOperator>(L.alpha);
    m.law = L.form == "fixed" ? fixed_heat_law(L.alpha) : intrinsic_heat_law(L.alpha);
  } else if (L.kind == "navier_stokes") {
    m.op = std::make_shared<NavierStokesOperator>(cfg.dim - 1, L.re);
  } else {
    try {
      m.law = SecondOrderScalarLaw::from_expression(cfg.dim, L.expr.s);
    } catch (const ExprError& e) {
      throw ConfigError(L.expr.path, e.what(), L.expr.line);
    }
    m.op = std::make_shared<LawOperator>(*m.law, "custom");
  }
  if (m.U.size() != m.op->fields())
    throw ConfigError("unknown", "law '" + L.kind + "' acts on " + std::to_string(m.op->fields()) +
                                     " component(s), unknown has " + std::to_string(m.U.size()));

  const FlowCfg& F = cfg.flow;
  auto check_count = [&](const Texts& ts, int want, const std::string& path) {
    if (static_cast<int>(ts.size()) != want)
      throw ConfigError(path, "expected " + std::to_string(want) + " components", F.line);
  };
  if (F.kind == "identity") {
    m.link = identity_link(cfg.dim);
  } else if (F.kind == "expression") {
    check_count(F.comps, cfg.dim, "flow.components");
    std::vector<Expr> es;
    for (const auto& t : F.comps) {
      try {
        es.push_back(Expr::parse(t.s, spacetime_symbols(cfg.dim)));
      } catch (const ExprError& e) {
        throw ConfigError(t.path, e.what(), t.line);
      }
    }
    m.link = fixed_link(expression_flow(std::move(es), F.time_identity));
  } else if (F.kind == "integrated") {
    check_count(F.velocity, cfg.dim - 1, "flow.velocity");
    const VectorField vel = compile_vector(cfg.dim, F.velocity);
    if (integrate) {
      const Grid labels(std::vector<Axis>(cfg.dim - 1, Axis{F.label_lo, F.label_hi, F.label_nodes}));
      m.link = fixed_link(F.noise > 0 ? integrate_noisy_flow_map(vel, NoisePath(F.noise_seed, labels, F.t0, F.t1, F.steps, F.noise),
                                                                 labels, F.t0, F.t1, F.steps)
                                      : integrate_flow_map(vel, labels, F.t0, F.t1, F.steps));
    }
  } else {
    check_count(F.comps, cfg.dim, "flow.components");
    std::vector<std::string> comps;
    for (const auto& t : F.comps) comps.push_back(t.s);
    try {
      m.ansatz = AlgebraicFlowAnsatz::from_expressions(cfg.dim, comps, F.theta, F.param_names);
    } catch (const ExprError& e) {
      throw ConfigError("flow.components", e.what(), F.line);
    }
    if (m.op->fields() != 1) throw ConfigError("flow", "an ansatz flow needs a scalar unknown", F.line);
    m.link = cfg.link == "algebraic" ? algebraic_link(*m.ansatz) : fixed_link(m.ansatz->compose(m.U[0]));
  }
  if (m.link.flow_of) m.flow = m.link.flow_of(m.U);

  // per-check consistency
  for (std::size_t i = 0; i < cfg.checks.size(); ++i) {
    const CheckCfg& c = cfg.checks[i];
    const std::string at = "checks[" + std::to_string(i) + "]";
    const int nf = m.op->fields();
    auto count = [&](const Texts& ts, const std::string& what) {
      if (!ts.empty() && static_cast<int>(ts.size()) != nf)
        throw ConfigError(at + "." + what, "expected " + std::to_string(nf) + " component(s)", c.line);
      for (const auto& t : ts) compile_scalar(cfg.dim, t);
    };
    for (const auto& [phi, psi] : c.probes) {
      count(phi, "probes.phi");
      count(psi, "probes.psi");
    }
    for (const auto& d : c.directions) count(d, "directions");
    count(c.from, "from");
    count(c.detour, "detour");
    if (c.kind == "intrinsic_reduction") {
      if (L.kind == "custom") throw ConfigError(at, "intrinsic_reduction needs the heat or navier_stokes law", c.line);
      if (L.kind == "navier_stokes" && F.kind != "identity" && !c.residual_tolerance)
        throw ConfigError(at, "away from the identity flow a residual_tolerance is required", c.line);
    }
    if (c.kind == "determining_residual" || c.kind == "tonti" || c.kind == "fit") {
      if (!m.law) throw ConfigError(at, c.kind + " needs a scalar second-order law", c.line);
      for (const auto& s : c.samples) {
        const auto it = m.fields.find(s);
        if (it == m.fields.end()) throw ConfigError(at + ".samples", "no field named '" + s + "'", c.line);
        if (it->second.size() != 1) throw ConfigError(at + ".samples", "'" + s + "' is not scalar", c.line);
      }
    }
    if ((c.kind == "determining_residual" || c.kind == "fit") && F.kind != "identity" && F.kind != "ansatz")
      throw ConfigError(at, c.kind + " needs an identity or ansatz flow", c.line);
    if (c.kind == "fit" && (!m.ansatz || m.ansatz->parameters() == 0))
      throw ConfigError(at, "fit needs an ansatz flow with parameters", c.line);
  }
  return m;
}

// --- checks ----------------------------------------------------------------------------------

struct Outcome {
  json measured = json::object();
  json tolerance;
  bool ok = false;
  std::string message;
  std::string table_name, table;
};

double tol_or(const CheckCfg& c, double fallback) { return c.tolerance.value_or(fallback); }

json vec_json(const Vec<double>& v, int d) {
  json a = json::array();
  for (int i = 0; i < d; ++i) a.push_back(v[i]);
  return a;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::vector<Point> random_points(const QuadratureSpec& q, int n, std::mt19937_64& rng) {
  std::vector<Point> pts;
  for (int k = 0; k < n; ++k) {
    std::vector<double> c(q.dim());
    for (int a = 0; a < q.dim(); ++a) {
      const auto& ax = q.axes[a];
      c[a] = ax.fixed ? ax.lo : std::uniform_real_distribution<double>(ax.lo, ax.hi)(rng);
    }
    pts.emplace_back(std::span<const double>(c));
  }
  return pts;
}

Outcome geometry_identities(const Model& m, const CheckCfg& c, std::mt19937_64& rng) {
  const int d = m.dim;
  double ident = 0.0, cof = 0.0, metric = 0.0;
  for (const Point& p : random_points(m.quad, c.points, rng)) {
    const auto r = check_jacobian_identity(m.flow, p);
    for (int i = 0; i < d; ++i) ident = std::max(ident, std::abs(r[i]));
    const auto jac = jacobian_matrix(m.flow, p);
    const auto C = cofactor_matrix(m.flow, p);
    Eigen::MatrixXd J(d, d);
    for (int i = 0; i < d; ++i)
      for (int k = 0; k < d; ++k) J(i, k) = jac[i][k];
    // cofactor convention: C J = det(J) I, i.e. C is the adjugate
    const Eigen::MatrixXd adj = J.determinant() * J.inverse();
    for (int i = 0; i < d; ++i)
      for (int k = 0; k < d; ++k) cof = std::max(cof, std::abs(C[i][k] - adj(i, k)));
    const auto g = metric_tensor(m.flow, p);
    Eigen::MatrixXd G(d, d);
    for (int i = 0; i < d; ++i)
      for (int k = 0; k < d; ++k) G(i, k) = g[i][k];
    const double J2 = J.determinant() * J.determinant();
    metric = std::max(metric, std::abs(G.determinant() - J2) / J2);
  }
  Outcome o;
  const double t_ident = tol_or(c, 1e-8), t_cof = tol_or(c, 1e-10), t_metric = tol_or(c, 1e-9);
  o.measured = {{"points", c.points}, {"jacobian_identity", ident}, {"cofactor", cof}, {"metric_determinant", metric}};
  o.tolerance = {{"jacobian_identity", t_ident}, {"cofactor", t_cof}, {"metric_determinant", t_metric}};
  o.ok = ident < t_ident && cof < t_cof && metric < t_metric;
  return o;
}

std::vector<double> cartesian_residual(const std::string& law, double alpha, double re, const VectorField& U,
                                       const Point& p) {
  const int d = p.size();
  if (law == "heat") {
    const Jet j = U[0].jet(p, 2);
    return {j.g[0] - alpha * j.h[1][1]};
  }
  const int n = d - 1;
  std::vector<Jet> u;
  for (int j = 0; j < n; ++j) u.push_back(U[j].jet(p, 2));
  const Jet pr = U[n].jet(p, 1);
  std::vector<double> out(n + 1, 0.0);
  for (int j = 0; j < n; ++j) {
    double adv = 0.0, lap = 0.0;
    for (int k = 1; k <= n; ++k) {
      adv += u[k - 1].v * u[j].g[k];
      lap += u[j].h[k][k];
    }
    out[j] = u[j].g[0] + adv + pr.g[j + 1] - lap / re;
    out[n] += u[j].g[j + 1];
  }
  return out;
}

Outcome intrinsic_reduction(const Model& m, const ScenarioConfig& cfg, const CheckCfg& c, std::mt19937_64& rng) {
  const bool rest = cfg.flow.kind == "identity";
  const bool heat = cfg.law.kind == "heat";
  const bool has_ref = rest || heat;
  double diff = 0.0, res = 0.0;
  for (const Point& p : random_points(m.quad, c.points, rng)) {
    const auto r = m.op->residual(m.U, m.flow, p);
    std::vector<double> ref;
    if (rest) ref = cartesian_residual(cfg.law.kind, cfg.law.alpha, cfg.law.re, m.U, p);
    else if (heat) ref = {heat_residual_pushforward(m.U[0], m.flow, cfg.law.alpha, p)};
    for (std::size_t i = 0; i < r.size(); ++i) {
      res = std::max(res, std::abs(r[i]));
      if (has_ref) diff = std::max(diff, std::abs(r[i] - ref[i]));
    }
  }
  Outcome o;
  o.measured = {{"points", c.points}, {"reference", rest ? "cartesian" : heat ? "pushforward" : "none"}};
  o.tolerance = json::object();
  o.ok = true;
  if (has_ref) {
    const double t = tol_or(c, rest ? 1e-12 : 1e-8);
    o.measured["max_abs_difference"] = diff;
    o.tolerance["difference"] = t;
    o.ok = diff < t;
  }
  o.measured["max_abs_residual"] = res;
  if (c.residual_tolerance) {
    o.tolerance["residual"] = *c.residual_tolerance;
    o.ok = o.ok && res < *c.residual_tolerance;
  }
  return o;
}

Outcome symmetry(const Model& m, const ScenarioConfig& cfg, const CheckCfg& c) {
  Outcome o;
  const double t = tol_or(c, 1e-8);
  double worst = 0.0;
  json pairs = json::array();
  std::ostringstream csv;
  csv << "pair,lhs,rhs,defect,normalization\n";
  for (std::size_t i = 0; i < c.probes.size(); ++i) {
    const auto r = symmetry_defect(*m.op, m.link, m.U, m.flow, compile_vector(cfg.dim, c.probes[i].first),
                                   compile_vector(cfg.dim, c.probes[i].second), c.variant, m.quad);
    worst = std::max(worst, std::abs(r.defect));
    pairs.push_back({{"lhs", r.lhs}, {"rhs", r.rhs}, {"defect", r.defect}, {"normalization", r.normalization}});
    csv << i << "," << fmt(r.lhs) << "," << fmt(r.rhs) << "," << fmt(r.defect) << "," << fmt(r.normalization) << "\n";
  }
  o.measured = {{"variant", to_string(c.variant)}, {"max_abs_defect", worst}, {"pairs", pairs}};
  o.tolerance = t;
  o.ok = worst < t;
  o.table_name = "symmetry";
  o.table = csv.str();
  return o;
}

VectorField constant_vector(int dim, int n, double v) {
  return VectorField(std::vector<ScalarField>(n, constant_field(dim, v)));
}

Outcome path_independence(const Model& m, const ScenarioConfig& cfg, const CheckCfg& c) {
  const int n = m.op->fields();
  const VectorField u0 = c.from.empty() ? constant_vector(cfg.dim, n, 0.0) : compile_vector(cfg.dim, c.from);
  const VectorField w = c.detour.empty() ? constant_vector(cfg.dim, n, 1.0) : compile_vector(cfg.dim, c.detour);
  const double a1 = path_integral(*m.op, m.link.flow_of, Homotopy::straight_line(u0, m.U), m.quad);
  const double a2 = path_integral(*m.op, m.link.flow_of, Homotopy::quadratic_detour(u0, m.U, w), m.quad);
  Outcome o;
  const double t = tol_or(c, 1e-6);
  o.measured = {{"action_straight", a1}, {"action_detour", a2}, {"difference", std::abs(a1 - a2)}};
  o.tolerance = {{"difference", t}};
  o.ok = std::abs(a1 - a2) < t;
  if (c.expected_action) {
    const double err = std::abs(a1 - *c.expected_action);
    o.measured["expected_action"] = *c.expected_action;
    o.measured["action_error"] = err;
    o.tolerance["action"] = c.action_tolerance;
    o.ok = o.ok && err < c.action_tolerance;
  }
  return o;
}

Outcome stationarity(const Model& m, const ScenarioConfig& cfg, const CheckCfg& c) {
  std::vector<VectorField> dirs;
  for (const auto& d : c.directions) dirs.push_back(compile_vector(cfg.dim, d));
  const auto r = stationarity_check(*m.op, m.link.flow_of, m.U, dirs, m.quad);
  Outcome o;
  const double t = tol_or(c, 1e-6);
  o.measured = {{"max_defect", r.max_defect}, {"defects", r.defects}, {"steps", r.steps}};
  o.tolerance = t;
  o.ok = r.max_defect < t;
  return o;
}

Grid node_grid(const ScenarioConfig& cfg, const CheckCfg& c) {
  const double lo = c.grid.lo.value_or(cfg.quad.lo), hi = c.grid.hi.value_or(cfg.quad.hi);
  if (c.grid.nodes == 1) {
    const double mid = 0.5 * (lo + hi);
    return Grid(std::vector<Axis>(cfg.dim, Axis{mid, mid + 1.0, 1}));
  }
  return Grid(std::vector<Axis>(cfg.dim, Axis{lo, hi, c.grid.nodes}));
}

std::vector<std::pair<std::string, ScalarField>> samples_of(const Model& m, const ScenarioConfig& cfg, const CheckCfg& c) {
  std::vector<std::pair<std::string, ScalarField>> out;
  if (c.samples.empty()) out.emplace_back(cfg.unknown.front(), m.U[0]);
  for (const auto& s : c.samples) out.emplace_back(s, m.fields.at(s)[0]);
  return out;
}

Outcome determining(const Model& m, const ScenarioConfig& cfg, const CheckCfg& c) {
  const int d = cfg.dim;
  const AlgebraicFlowAnsatz ansatz = m.ansatz ? *m.ansatz : AlgebraicFlowAnsatz::identity(d);
  const Grid grid = node_grid(cfg, c);
  double maxR = 0.0, maxF = 0.0, maxAlt = 0.0;
  json first;
  std::ostringstream csv;
  csv << "sample,node";
  for (int i = 0; i < d; ++i) csv << ",s" << i;
  for (int i = 0; i < d; ++i) csv << ",R" << i;
  csv << ",max_abs_Fsym\n";
  for (const auto& [name, u] : samples_of(m, cfg, c))
    for (std::size_t k = 0; k < grid.size(); ++k) {
      const Point p(grid.coords(k));
      const auto r = determining_residual(*m.law, ansatz, u, p, {c.frozen});
      const auto alt = determining_residual(*m.law, ansatz, u, p, {!c.frozen});
      double fs = 0.0;
      for (int i = 0; i < d; ++i) {
        maxR = std::max(maxR, std::abs(r.R[i]));
        maxAlt = std::max(maxAlt, std::abs(alt.R[i]));
        for (int j = 0; j < d; ++j) fs = std::max(fs, std::abs(r.Fsym[i][j]));
      }
      maxF = std::max(maxF, fs);
      if (first.is_null()) first = vec_json(r.R, d);
      csv << name << "," << k;
      for (int i = 0; i < d; ++i) csv << "," << fmt(p[i]);
      for (int i = 0; i < d; ++i) csv << "," << fmt(r.R[i]);
      csv << "," << fmt(fs) << "\n";
    }
  Outcome o;
  const double t = tol_or(c, 1e-8);
  o.measured = {{"nodes", grid.size()},
                {"connection", c.frozen ? "frozen" : "composed"},
                {"max_abs_R", maxR},
                {"max_abs_Fsym", maxF},
                {"R_first_node", first},
                {"max_abs_R_other_connection", maxAlt},
                {"convention", "R = div F + Gamma F - B; equals -T for the identity flow"}};
  o.tolerance = t;
  o.ok = maxR < t && maxF < t;
  o.table_name = "determining";
  o.table = csv.str();
  return o;
}

Outcome tonti(const Model& m, const ScenarioConfig& cfg, const CheckCfg& c) {
  const int d = cfg.dim;
  const Grid grid = node_grid(cfg, c);
  double worst = 0.0;
  json first;
  std::ostringstream csv;
  csv << "sample,node";
  for (int i = 0; i < d; ++i) csv << ",s" << i;
  for (int i = 0; i < d; ++i) csv << ",T" << i;
  csv << "\n";
  for (const auto& [name, u] : samples_of(m, cfg, c))
    for (std::size_t k = 0; k < grid.size(); ++k) {
      const Point p(grid.coords(k));
      const auto r = tonti_residual(*m.law, u, p);
      for (int i = 0; i < d; ++i) worst = std::max(worst, std::abs(r[i]));
      if (first.is_null()) first = vec_json(r, d);
      csv << name << "," << k;
      for (int i = 0; i < d; ++i) csv << "," << fmt(p[i]);
      for (int i = 0; i < d; ++i) csv << "," << fmt(r[i]);
      csv << "\n";
    }
  Outcome o;
  const double t = tol_or(c, 1e-9);
  o.measured = {{"nodes", grid.size()},
                {"max_abs_residual", worst},
                {"residual", first},
                {"convention", "T = df/du_nu - d/dsigma^rho df/du_{nu rho}"}};
  o.tolerance = t;
  o.ok = worst < t;
  o.table_name = "tonti";
  o.table = csv.str();
  return o;
}

Outcome fit(const Model& m, const ScenarioConfig& cfg, const CheckCfg& c) {
  std::vector<ScalarField> samples;
  for (const auto& s : samples_of(m, cfg, c)) samples.push_back(s.second);
  FitOptions fo;
  fo.max_iterations = c.max_iterations;
  fo.tolerance = tol_or(c, fo.tolerance);
  fo.determining.frozen_connection = c.frozen;
  const auto r = fit_symmetrizing_flow(*m.law, *m.ansatz, samples, node_grid(cfg, c), fo);
  bool monotone = true;
  for (std::size_t i = 1; i < r.trace.size(); ++i) monotone = monotone && r.trace[i].residual_norm <= r.trace[i - 1].residual_norm;
  json theta = json::object();
  for (std::size_t i = 0; i < r.theta.size(); ++i) theta[m.ansatz->param_names()[i]] = r.theta[i];
  Outcome o;
  o.measured = {{"status", to_string(r.status)}, {"message", r.message},      {"iterations", r.trace.size()},
                {"initial_norm", r.initial_norm},  {"residual_norm", r.residual_norm}, {"theta", theta},
                {"monotone", monotone}};
  o.tolerance = fo.tolerance;
  o.ok = r.status == FitStatus::converged && monotone;
  std::ostringstream csv;
  r.write_trace_csv(csv);
  o.table_name = "fit_trace";
  o.table = csv.str();
  return o;
}

Outcome dispatch(const Model& m, const ScenarioConfig& cfg, const CheckCfg& c, std::mt19937_64& rng) {
  if (c.kind == "geometry_identities") return geometry_identities(m, c, rng);
  if (c.kind == "intrinsic_reduction") return intrinsic_reduction(m, cfg, c, rng);
  if (c.kind == "symmetry_defect") return symmetry(m, cfg, c);
  if (c.kind == "path_independence") return path_independence(m, cfg, c);
  if (c.kind == "stationarity") return stationarity(m, cfg, c);
  if (c.kind == "determining_residual") return determining(m, cfg, c);
  if (c.kind == "tonti") return tonti(m, cfg, c);
  return fit(m, cfg, c);
}

double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

CheckRecord run_check(const Model* m, const std::string& build_error, const ScenarioConfig& cfg, std::size_t index,
                      std::uint64_t seed, std::map<std::string, std::string>& tables, std::mutex& tables_mutex) {
  const CheckCfg& c = cfg.checks[index];
  CheckRecord rec;
  rec.name = c.name;
  rec.kind = c.kind;
  rec.expect_fail = c.expect_fail;
  const auto t0 = std::chrono::steady_clock::now();
  bool ok = false;
  if (!m) {
    rec.message = build_error;
  } else {
    std::mt19937_64 rng(seed + 0x9e3779b97f4a7c15ULL * (index + 1));
    try {
      Outcome o = dispatch(*m, cfg, c, rng);
      ok = o.ok;
      rec.measured = std::move(o.measured);
      rec.tolerance = std::move(o.tolerance);
      rec.message = o.message;
      if (!o.table_name.empty()) {
        std::lock_guard lock(tables_mutex);
        tables[c.name + "_" + o.table_name + ".csv"] = std::move(o.table);
      }
    } catch (const std::exception& e) {
      rec.message = e.what();
    }
  }
  if (c.expect_fail) {
    rec.status = ok ? CheckStatus::fail : CheckStatus::info;
    if (ok) rec.message = "expected to fail but passed";
    else if (rec.message.empty()) rec.message = "known failure";
  } else {
    rec.status = ok ? CheckStatus::pass : CheckStatus::fail;
  }
  rec.runtime_ms = ms_since(t0);
  return rec;
}

}  // namespace

// --- public API ------------------------------------------------------------------------------

Scenario Scenario::parse(const std::string& text, const std::string& source) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError("", e.msg, e.mark.line >= 0 ? e.mark.line + 1 : 0);
  }
  if (!root || root.IsNull()) throw ConfigError("", "empty config");
  Scenario s;
  auto cfg = std::make_shared<ScenarioConfig>(parse_config(root, source));
  compile(*cfg, {}, false);
  s.cfg_ = std::move(cfg);
  return s;
}

Scenario Scenario::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot read '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path);
}

const std::string& Scenario::name() const { return cfg_->name; }
const std::string& Scenario::source() const { return cfg_->source; }
const std::vector<std::string>& Scenario::check_names() const { return cfg_->check_names; }

std::string to_string(CheckStatus s) {
  switch (s) {
    case CheckStatus::pass: return "pass";
    case CheckStatus::fail: return "fail";
    default: return "info";
  }
}

int Report::exit_code() const {
  for (const auto& c : checks)
    if (c.status == CheckStatus::fail) return 1;
  return 0;
}

std::string Report::to_json() const {
  json j;
  j["scenario"] = scenario;
  j["environment"] = environment;
  json cs = json::array();
  int counts[3] = {0, 0, 0};
  for (const auto& c : checks) {
    ++counts[static_cast<int>(c.status)];
    json r;
    r["name"] = c.name;
    r["check"] = c.kind;
    r["status"] = to_string(c.status);
    r["expect"] = c.expect_fail ? "fail" : "pass";
    r["tolerance"] = c.tolerance;
    r["measured"] = c.measured;
    r["message"] = c.message;
    r["runtime_ms"] = c.runtime_ms;
    cs.push_back(std::move(r));
  }
  j["checks"] = std::move(cs);
  j["summary"] = {{"passed", counts[0]}, {"failed", counts[1]}, {"info", counts[2]}, {"exit_code", exit_code()},
                  {"runtime_ms", runtime_ms}};
  return j.dump(2) + "\n";
}

void Report::write_tables(const std::string& dir) const {
  std::filesystem::create_directories(dir);
  for (const auto& [name, csv] : tables) {
    std::ofstream out(std::filesystem::path(dir) / name);
    if (!out) throw std::runtime_error("cannot write table '" + name + "'");
    out << csv;
  }
}

Report run_scenario(const Scenario& scenario, const RunOptions& opts) {
  const ScenarioConfig& cfg = scenario.config();
  const auto t0 = std::chrono::steady_clock::now();
  const std::uint64_t seed = opts.seed.value_or(cfg.seed);

  Report rep;
  rep.report_path = cfg.report_path;
  rep.tables_dir = cfg.tables_dir;
  json fields = json::object();
  for (const auto& [name, ts] : cfg.fields) {
    json a = json::array();
    for (const auto& t : ts) a.push_back(t.s);
    fields[name] = a;
  }
  json law = {{"kind", cfg.law.kind}};
  if (cfg.law.kind == "heat") law["alpha"] = cfg.law.alpha, law["form"] = cfg.law.form;
  if (cfg.law.kind == "navier_stokes") law["reynolds"] = cfg.law.re;
  if (cfg.law.kind == "custom") law["expression"] = cfg.law.expr.s;
  json flow = {{"kind", cfg.flow.kind}};
  if (cfg.flow.kind == "integrated") {
    flow["integrator"] = "rk4";
    flow["steps"] = cfg.flow.steps;
    if (cfg.flow.noise > 0)
      flow["noise"] = {{"scale", cfg.flow.noise},
                       {"seed", cfg.flow.noise_seed},
                       {"model", "independent Gaussian increments per label node, linear in t"}};
  }
  rep.scenario = {{"name", cfg.name},      {"source", cfg.source}, {"dimension", cfg.dim},
                  {"flow", flow}, {"link", cfg.link},     {"law", law},
                  {"unknown", cfg.unknown}, {"fields", fields},   {"checks", cfg.check_names}};

  std::optional<Model> model;
  std::string build_error;
  try {
    model = compile(cfg, opts, true);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    build_error = std::string("setup failed: ") + e.what();
  }
  rep.environment = {{"version", cflow_version()},
                     {"seed", seed},
                     {"quadrature_nodes", opts.quad_nodes.value_or(cfg.quad.nodes)},
                     {"lambda_nodes", cfg.quad.lambda_nodes}};

  const Model* m = model ? &*model : nullptr;
  std::mutex tables_mutex;
  if (opts.parallel) {
    std::vector<std::future<CheckRecord>> futs;
    for (std::size_t i = 0; i < cfg.checks.size(); ++i)
      futs.push_back(std::async(std::launch::async, [&, i] {
        return run_check(m, build_error, cfg, i, seed, rep.tables, tables_mutex);
      }));
    for (auto& f : futs) rep.checks.push_back(f.get());
  } else {
    for (std::size_t i = 0; i < cfg.checks.size(); ++i)
      rep.checks.push_back(run_check(m, build_error, cfg, i, seed, rep.tables, tables_mutex));
  }
  rep.runtime_ms = ms_since(t0);
  return rep;
}

const std::vector<CheckInfo>& available_checks() { return kChecks; }

std::string cflow_version() { return CFLOW_VERSION; }

}  // namespace cflow
