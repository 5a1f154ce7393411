#pragma once

// Gateaux derivatives of intrinsic operators, the Jacobian-weighted bilinear
// form and its variation, action functionals built from path integrals over a
// homotopy of fields, and the symmetry tests that decide potentialness.

#include <functional>
#include <string>
#include <vector>

#include "cflow/fields.hpp"
#include "cflow/geometry.hpp"
#include "cflow/intrinsic.hpp"
#include "cflow/quadrature.hpp"

namespace cflow {

enum class GateauxMode { exact, fd };

/// d/de N_x(u + e phi) at p with the flow held fixed.
std::vector<double> gateaux_field_derivative(const IntrinsicOperator& op, const VectorField& u, const FlowMap& flow,
                                             const VectorField& phi, const Point& p,
                                             GateauxMode mode = GateauxMode::exact);
/// d/de N_{x + e phi_hat}(u) at p.
std::vector<double> gateaux_flow_derivative(const IntrinsicOperator& op, const VectorField& u, const FlowMap& flow,
                                            const FlowPerturbation& phi_hat, const Point& p,
                                            GateauxMode mode = GateauxMode::exact);

/// Anything with a vector value per point: residuals, derivatives, fields.
using PointwiseValue = std::function<std::vector<double>(const Point&)>;
PointwiseValue pointwise(const VectorField& f);
PointwiseValue pointwise(const ScalarField& f);

/// Cartesian divergence of a flow perturbation, d phi^mu / d x^mu.
double perturbation_divergence(const MapJet& x, const MapJet& phi);

/// Integral of a.b J over the box. DegenerateFlowError if J <= 0 at a node.
double advective_form(const PointwiseValue& a, const PointwiseValue& b, const FlowMap& flow, const QuadratureSpec& quad);
double advective_form(const VectorField& a, const VectorField& b, const FlowMap& flow, const QuadratureSpec& quad);
double advective_form(const ScalarField& a, const ScalarField& b, const FlowMap& flow, const QuadratureSpec& quad);
/// sqrt(<a, a>)
double advective_norm(const PointwiseValue& a, const FlowMap& flow, const QuadratureSpec& quad);

/// Integral of a.b J div(phi_hat): the first variation of <a, b> as the flow moves along phi_hat.
double advective_form_variation(const PointwiseValue& a, const PointwiseValue& b, const FlowPerturbation& phi_hat,
                                const FlowMap& flow, const QuadratureSpec& quad);
/// Same with phi_hat = link.forward(u, phi).
double advective_form_variation(const PointwiseValue& a, const PointwiseValue& b, const VectorField& u,
                                const VectorField& phi, const FlowLink& link, const FlowMap& flow,
                                const QuadratureSpec& quad);

/// lambda -> u_lambda with endpoints u0 (lambda = 0) and u1 (lambda = 1).
class Homotopy {
 public:
  static Homotopy straight_line(VectorField u0, VectorField u1);
  /// u0 + lambda (u1 - u0) + lambda (1 - lambda) w
  static Homotopy quadratic_detour(VectorField u0, VectorField u1, VectorField w);

  VectorField eval(double lambda) const;
  VectorField deriv(double lambda) const;
  const VectorField& start() const { return u0_; }
  const VectorField& end() const { return u1_; }

 private:
  VectorField u0_, u1_, w_;
  bool detour_ = false;
};

using FlowOf = std::function<FlowMap(const VectorField&)>;

/// Integral over lambda of <N(u_lambda), du/dlambda> under the flow realized at u_lambda.
double path_integral(const IntrinsicOperator& op, const FlowOf& flow_of, const Homotopy& path,
                     const QuadratureSpec& quad);
/// Action at u relative to u0 (whose action is 0), along the straight line.
double build_action(const IntrinsicOperator& op, const FlowOf& flow_of, const VectorField& u0, const VectorField& u,
                    const QuadratureSpec& quad);

struct StationarityResult {
  double max_defect = 0.0;
  std::vector<double> defects;
  std::vector<double> steps;
};
/// Central difference of the action along each direction minus <N(u), du>.
/// The action is measured from the zero field.
StationarityResult stationarity_check(const IntrinsicOperator& op, const FlowOf& flow_of, const VectorField& u,
                                      const std::vector<VectorField>& directions, const QuadratureSpec& quad);

enum class SymmetryVariant { full, incompressible, fixed_flow, classical };
std::string to_string(SymmetryVariant v);
SymmetryVariant parse_symmetry_variant(const std::string& s);

struct SymmetryReport {
  SymmetryVariant variant = SymmetryVariant::full;
  double lhs = 0.0, rhs = 0.0;
  double defect = 0.0;  // lhs - rhs
  double normalization = 1.0;
  std::string to_json() const;
};

/// Both sides of the circulation condition for the probe pair (phi, psi), each
/// divided by |phi| |psi| under the advective form of `flow`.
SymmetryReport symmetry_defect(const IntrinsicOperator& op, const FlowLink& link, const VectorField& u,
                               const FlowMap& flow, const VectorField& phi, const VectorField& psi,
                               SymmetryVariant variant, const QuadratureSpec& quad);

/// G phi = dN/du phi + dN/dx phi_hat with phi_hat = link.forward(u, phi), pointwise.
PointwiseValue linearized_operator(const IntrinsicOperator& op, const FlowLink& link, const VectorField& u,
                                   const FlowMap& flow, const VectorField& phi);

}  // namespace cflow
