#pragma once

// Symmetrizing algebraic flows for second-order scalar laws: link and symmetry
// coefficients, the determining-equation residual, the fixed-coordinate
// classical condition, and a least-squares fit of ansatz parameters.

#include <iosfwd>
#include <string>
#include <vector>

#include "cflow/ansatz.hpp"
#include "cflow/fields.hpp"
#include "cflow/law.hpp"

namespace cflow {

/// a^mu = dx^mu/du along u, b = da/dsigma (total), c = db/dsigma (total).
struct LinkCoefficients {
  int dim = 0;
  Vec<double> a{};
  Mat<double> b{};      // b[mu][nu]
  Tensor3<double> c{};  // c[mu][nu][rho], symmetric in (nu, rho)
};

LinkCoefficients link_coefficients(const AlgebraicFlowAnsatz& ansatz, const ScalarField& u, const Point& p);

struct SymmetryCoefficients {
  int dim = 0;
  double H = 0.0;
  Vec<double> B{};
  Mat<double> F{};  // F[rho][nu]
  /// Total divergence of B, d B^nu / d sigma^nu.
  double divB = 0.0;
};

/// Second-derivative partials of f are symmetrized: only their symmetric part
/// meets the symmetric second derivatives of a perturbation.
SymmetryCoefficients symmetry_coefficients(const SecondOrderScalarLaw& law, const AlgebraicFlowAnsatz& ansatz,
                                           const ScalarField& u, const Point& p);

struct DeterminingOptions {
  /// Build the connection from the flow with u frozen at u(p) instead of the
  /// flow composed with u.
  bool frozen_connection = false;
};

struct DeterminingResidual {
  int dim = 0;
  Mat<double> F{};
  Mat<double> Fsym{};  // F - F^T
  Vec<double> R{};     // dF^{nu rho}/dsigma^rho + Gamma^b_{b rho} F^{rho nu} - B^nu
  Vec<double> B{};
  double H = 0.0;
};

/// u must provide third derivatives.
DeterminingResidual determining_residual(const SecondOrderScalarLaw& law, const AlgebraicFlowAnsatz& ansatz,
                                         const ScalarField& u, const Point& p, const DeterminingOptions& opts = {});

/// df/du_nu - d/dsigma^rho (df/du_{nu rho}) in fixed coordinates. With no
/// flow link this is the negative of the determining residual R.
Vec<double> tonti_residual(const SecondOrderScalarLaw& law, const ScalarField& u, const Point& p);

// --- fitting --------------------------------------------------------------------------

struct FitOptions {
  int max_iterations = 100;
  double tolerance = 1e-10;   // converged when the residual norm falls to this
  double gradient_tol = 1e-10;
  double damping = 1e-3;
  double fd_step = 1e-6;
  /// Give up when the relative decrease over `stall_window` iterations is below this.
  double stall_tol = 1e-12;
  int stall_window = 10;
  DeterminingOptions determining;
};

struct FitIteration {
  int iteration = 0;
  double residual_norm = 0.0;
  double damping = 0.0;
  bool accepted = false;
};

enum class FitStatus { converged, no_convergence };
std::string to_string(FitStatus s);

struct FitResult {
  std::vector<double> theta;
  double residual_norm = 0.0;
  double initial_norm = 0.0;
  FitStatus status = FitStatus::no_convergence;
  std::string message;
  std::vector<FitIteration> trace;

  void write_trace_csv(std::ostream& os) const;
  std::string to_json(const std::vector<std::string>& names) const;
};

/// Stacked [R; F - F^T] over every sample and grid node, at the ansatz's theta.
std::vector<double> determining_system(const SecondOrderScalarLaw& law, const AlgebraicFlowAnsatz& ansatz,
                                       const std::vector<ScalarField>& samples, const Grid& grid,
                                       const DeterminingOptions& opts = {});

/// Levenberg-Marquardt on the stacked determining residual, from theta = 0.
FitResult fit_symmetrizing_flow(const SecondOrderScalarLaw& law, const AlgebraicFlowAnsatz& family,
                                const std::vector<ScalarField>& samples, const Grid& grid, const FitOptions& opts = {});

}  // namespace cflow
