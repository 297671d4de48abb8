#pragma once

#include "perfhom/alpha.hpp"
#include "perfhom/fem.hpp"

#include <functional>
#include <optional>
#include <vector>

namespace perfhom {

/// The solvers use `lambda` below (default lambda0_hat - 1); the lambda field
/// of the coefficient set is ignored.
struct SolveOptions {
  std::optional<double> lambda;
  double picard_tol = 1e-10;
  int picard_max_iter = 200;
  double damping = 1.0;
  double linear_tol = 1e-12;
  LinearMethod linear_method = LinearMethod::automatic;
  bool newton = true;
  /// Switch to Newton once ||step||_H1 < newton_switch * ||u||_H1.
  double newton_switch = 1e-3;
  GeometryConstants geometry;
  std::optional<CVector> initial_guess;
  /// Restricts the Dirichlet condition to outer nodes where this returns true;
  /// the rest of the outer boundary becomes natural (zero conormal flux).
  std::function<bool(const Vec3&)> dirichlet_region;

  void validate() const;
};

struct SolveDiagnostics {
  double lambda = 0.0;
  double lambda0 = 0.0;
  int picard_iterations = 0;
  int newton_iterations = 0;
  /// ||u_{k+1} - u_k||_H1 / ||u_k - u_{k-1}||_H1 over the Picard phase.
  std::vector<double> contraction_ratios;
  /// Final ||R(u)|| / ||F|| over the free nodes.
  double relative_residual = 0.0;
};

struct SolveResult {
  DiscreteField u;
  SolveDiagnostics diagnostics;
};

/// h_0(u, v) + (a(., u), v) on the cavity boundaries - lambda (u, v) = (f, v), u = 0 on the box.
SolveResult solve_perforated(const Mesh& mesh, const CoefficientSet& coeffs, const NonlinearBC& nbc,
                             const ScalarField& f, const SolveOptions& opts = {});

/// Unperforated Dirichlet problem; interface facets, if any, are ignored.
SolveResult solve_homogenized_plain(const Mesh& mesh, const CoefficientSet& coeffs, const ScalarField& f,
                                    const SolveOptions& opts = {});

/// h_0(u, v) + (alpha0 a(., u), v)_S - lambda (u, v) = (f, v) on an interface mesh.
SolveResult solve_homogenized_delta(const Mesh& mesh, const CoefficientSet& coeffs, const SurfaceDensity& alpha0,
                                    const NonlinearBC& nbc, const ScalarField& f, const SolveOptions& opts = {});

/// Picard then Newton on K u + r(u) = F with homogeneous Dirichlet data.
/// K must already contain the -lambda mass shift.
SolveResult solve_nonlinear(const AssembledSystem& system, const FacetQuadrature& quad, const NonlinearBC& nbc,
                            const SolveOptions& opts);

}  // namespace perfhom
