#include "perfhom/solvers.hpp"

#include "perfhom/error.hpp"

#include <Eigen/SparseCholesky>
#include <spdlog/spdlog.h>

#include <cmath>
#include <memory>

namespace perfhom {

namespace {

bool real_symmetric(const CSparse& A) {
  for (Eigen::Index k = 0; k < A.outerSize(); ++k) {
    for (CSparse::InnerIterator it(A, k); it; ++it) {
      if (it.value().imag() != 0.0) return false;
    }
  }
  const RSparse R = A.real();
  const RSparse D = R - RSparse(R.transpose());
  double dmax = 0.0;
  double amax = 0.0;
  for (Eigen::Index k = 0; k < D.outerSize(); ++k) {
    for (RSparse::InnerIterator it(D, k); it; ++it) dmax = std::max(dmax, std::abs(it.value()));
  }
  for (Eigen::Index k = 0; k < R.outerSize(); ++k) {
    for (RSparse::InnerIterator it(R, k); it; ++it) amax = std::max(amax, std::abs(it.value()));
  }
  return dmax <= 1e-12 * amax;
}

/// Solves the successive linearized systems, reusing the symbolic
/// factorization while the matrices stay real symmetric with one pattern.
class StepSolver {
 public:
  StepSolver(LinearMethod method, double tol) : method_(method), tol_(tol) {}

  CVector solve(const CSparse& A, const CVector& b) {
    const bool direct = method_ == LinearMethod::automatic || method_ == LinearMethod::direct;
    if (direct && A.rows() <= 600000 && real_symmetric(A)) {
      RSparse R = A.real();
      R.makeCompressed();
      if (!ldlt_ || R.nonZeros() != pattern_nnz_) {
        ldlt_ = std::make_unique<Eigen::SimplicialLDLT<RSparse>>();
        ldlt_->analyzePattern(R);
        pattern_nnz_ = R.nonZeros();
      }
      ldlt_->factorize(R);
      if (ldlt_->info() == Eigen::Success) {
        const double bn = b.norm();
        if (bn == 0.0) return CVector::Zero(b.size());
        CVector x(b.size());
        x.real() = ldlt_->solve(RVector(b.real()));
        x.imag() = b.imag().isZero(0.0) ? RVector::Zero(b.size()) : RVector(ldlt_->solve(RVector(b.imag())));
        if (x.allFinite() && (A * x - b).norm() <= std::max(10.0 * tol_, 1e-9) * bn) return x;
      }
      ldlt_.reset();
    }
    return solve_sparse(A, b, tol_, method_);
  }

 private:
  LinearMethod method_;
  double tol_;
  std::unique_ptr<Eigen::SimplicialLDLT<RSparse>> ldlt_;
  Eigen::Index pattern_nnz_ = -1;
};

/// int s(x, u) phi_j phi_i with the secant s = a(x, u) / u at the current iterate.
CSparse secant_matrix(const FacetQuadrature& quad, const NonlinearBC& nbc, const CVector& u) {
  const int d = quad.dim;
  std::vector<Eigen::Triplet<Complex>> t;
  t.reserve(quad.size() * static_cast<std::size_t>(d * d));
  for (std::size_t q = 0; q < quad.size(); ++q) {
    Complex uq = 0.0;
    for (int i = 0; i < d; ++i) uq += quad.basis[q][i] * u[quad.nodes[q][i]];
    const Complex s = quad.weights[q] * nbc.secant(quad.points[q], uq);
    for (int i = 0; i < d; ++i) {
      for (int j = 0; j < d; ++j) t.emplace_back(quad.nodes[q][i], quad.nodes[q][j], s * quad.basis[q][i] * quad.basis[q][j]);
    }
  }
  CSparse B(u.size(), u.size());
  B.setFromTriplets(t.begin(), t.end());
  return B;
}

double h1(const RSparse& G, const CVector& v) { return std::sqrt(std::max(0.0, v.dot(G * v).real())); }

void zero_masked(CVector& v, const std::vector<char>& mask) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (mask[static_cast<std::size_t>(i)]) v[i] = 0.0;
  }
}

/// Realified Jacobian of u -> K u + r(u) in the unknowns (Re u, Im u).
RSparse realify(const CSparse& K, const CSparse& Jre, const CSparse& Jim, const std::vector<char>& mask) {
  const Eigen::Index n = K.rows();
  std::vector<Eigen::Triplet<double>> t;
  auto add = [&](const CSparse& M, Eigen::Index r0, Eigen::Index c0, double sre, double sim) {
    for (Eigen::Index k = 0; k < M.outerSize(); ++k) {
      for (CSparse::InnerIterator it(M, k); it; ++it) {
        const double v = sre * it.value().real() + sim * it.value().imag();
        if (v != 0.0) t.emplace_back(r0 + it.row(), c0 + it.col(), v);
      }
    }
  };
  add(K, 0, 0, 1, 0);
  add(K, 0, n, 0, -1);
  add(K, n, 0, 0, 1);
  add(K, n, n, 1, 0);
  add(Jre, 0, 0, 1, 0);
  add(Jre, n, 0, 0, 1);
  add(Jim, 0, n, 1, 0);
  add(Jim, n, n, 0, 1);
  std::vector<Eigen::Triplet<double>> kept;
  kept.reserve(t.size());
  for (const auto& e : t) {
    const bool rm = mask[static_cast<std::size_t>(e.row() % n)];
    const bool cm = mask[static_cast<std::size_t>(e.col() % n)];
    if (!rm && !cm) kept.push_back(e);
  }
  for (Eigen::Index i = 0; i < 2 * n; ++i) {
    if (mask[static_cast<std::size_t>(i % n)]) kept.emplace_back(i, i, 1.0);
  }
  RSparse J(2 * n, 2 * n);
  J.setFromTriplets(kept.begin(), kept.end());
  return J;
}

}  // namespace

void SolveOptions::validate() const {
  if (!(picard_tol > 0.0) || !(linear_tol > 0.0)) throw Error(ErrorCode::invalid_argument, "tolerances must be positive");
  if (!(damping > 0.0 && damping <= 1.0)) throw Error(ErrorCode::invalid_argument, "damping must lie in (0, 1]");
  if (picard_max_iter < 1) throw Error(ErrorCode::invalid_argument, "picard_max_iter must be positive");
}

SolveResult solve_nonlinear(const AssembledSystem& system, const FacetQuadrature& quad, const NonlinearBC& nbc,
                            const SolveOptions& opts) {
  opts.validate();
  const Mesh& mesh = *system.mesh;
  const auto n = static_cast<Eigen::Index>(system.size());
  const auto& mask = system.dirichlet;
  SolveResult res;
  res.u = DiscreteField::zeros(mesh);

  CVector F = system.load;
  zero_masked(F, mask);
  const double fnorm = F.norm();
  if (fnorm == 0.0 && !opts.initial_guess) return res;

  const RSparse G = system.gram();
  StepSolver stepper(opts.linear_method, opts.linear_tol);
  CVector u = CVector::Zero(n);
  if (opts.initial_guess) {
    if (opts.initial_guess->size() != n) throw Error(ErrorCode::invalid_argument, "initial guess has the wrong length");
    u = *opts.initial_guess;
    zero_masked(u, mask);
  }
  auto residual = [&](const CVector& v) {
    CVector r = system.K * v + boundary_nonlinear(quad, nbc, v, false).residual - system.load;
    zero_masked(r, mask);
    return r;
  };
  const double scale = fnorm > 0.0 ? fnorm : 1.0;
  auto& diag = res.diagnostics;
  double rel = residual(u).norm() / scale;

  bool newton_phase = false;
  double prev_step = -1.0;
  int growth = 0;
  const bool real_problem = system.real_valued && nbc.real_valued(quad.points) && u.imag().isZero(0.0);
  const bool complex_newton = real_problem || nbc.holomorphic();

  for (int it = 0; it < opts.picard_max_iter && rel > opts.picard_tol; ++it) {
    if (!newton_phase) {
      CSparse A = system.K + secant_matrix(quad, nbc, u);
      CVector b = system.load;
      apply_dirichlet(A, b, mask);
      const CVector target = stepper.solve(A, b);
      const CVector step = opts.damping * (target - u);
      u += step;
      ++diag.picard_iterations;
      const double s = h1(G, step);
      if (prev_step > 0.0) {
        const double ratio = s / prev_step;
        diag.contraction_ratios.push_back(ratio);
        growth = ratio >= 1.0 ? growth + 1 : 0;
        if (growth >= 5) {
          throw Error(ErrorCode::picard_divergence, "Picard steps grew for five consecutive iterations");
        }
      }
      prev_step = s;
      if (!u.allFinite()) throw Error(ErrorCode::picard_divergence, "Picard iterate is not finite");
      rel = residual(u).norm() / scale;
      if (opts.newton && nbc.kind == NonlinearKind::saturating && s < opts.newton_switch * h1(G, u)) {
        newton_phase = true;
      }
      continue;
    }
    const NonlinearTerms nl = boundary_nonlinear(quad, nbc, u, true);
    CVector R = system.K * u + nl.residual - system.load;
    zero_masked(R, mask);
    CVector delta(n);
    if (complex_newton) {
      CSparse J = system.K + nl.jac_re;
      CVector b = -R;
      apply_dirichlet(J, b, mask);
      delta = stepper.solve(J, b);
    } else {
      const RSparse J = realify(system.K, nl.jac_re, nl.jac_im, mask);
      CVector b(2 * n);
      b.head(n) = (-R.real()).cast<Complex>();
      b.tail(n) = (-R.imag()).cast<Complex>();
      const CVector x = solve_sparse(J.cast<Complex>(), b, opts.linear_tol, opts.linear_method);
      delta.real() = x.head(n).real();
      delta.imag() = x.tail(n).real();
    }
    const CVector trial = u + delta;
    const double trial_rel = residual(trial).norm() / scale;
    ++diag.newton_iterations;
    if (!(trial_rel < rel)) {
      // Newton did not reduce the residual: return to the globally convergent iteration.
      spdlog::debug("Newton step rejected ({} >= {}), resuming Picard", trial_rel, rel);
      newton_phase = false;
      prev_step = -1.0;
      continue;
    }
    u = trial;
    rel = trial_rel;
  }
  diag.relative_residual = rel;
  if (!(rel <= opts.picard_tol)) {
    throw Error(ErrorCode::picard_divergence, "nonlinear iteration stopped at relative residual " + std::to_string(rel));
  }
  res.u = DiscreteField(mesh, u);
  return res;
}

namespace {

double resolve_lambda(const Mesh& mesh, const CoefficientSet& coeffs, const NonlinearBC& nbc,
                      const SolveOptions& opts, SolveDiagnostics& diag) {
  const Lambda0Estimate est = estimate_lambda0(coeffs, nbc, opts.geometry, &mesh);
  diag.lambda0 = est.lambda0;
  const double lambda = opts.lambda.value_or(est.lambda0 - 1.0);
  if (!(lambda < est.lambda0)) {
    throw Error(ErrorCode::lambda_out_of_range, "lambda = " + std::to_string(lambda) +
                                                    " is not below the coercivity threshold " +
                                                    std::to_string(est.lambda0));
  }
  diag.lambda = lambda;
  return lambda;
}

AssembledSystem assemble_with(const Mesh& mesh, const CoefficientSet& c, const ScalarField& f,
                              const SolveOptions& opts) {
  AssembledSystem sys = assemble(mesh, c, f);
  if (opts.dirichlet_region) {
    for (std::size_t i = 0; i < mesh.num_vertices(); ++i) {
      if (sys.dirichlet[i] && !opts.dirichlet_region(mesh.vertices[i])) sys.dirichlet[i] = 0;
    }
  }
  return sys;
}

NonlinearBC scaled_for_interface(const NonlinearBC& nbc, const SurfaceDensity& alpha0) {
  // The interface term alpha0 a(x, u) has Lipschitz constant sup alpha0 * a0.
  NonlinearBC out = nbc;
  out.a0 = nbc.a0 * alpha0.sup();
  if (alpha0.is_constant() && alpha0.sup() == 0.0) out.kind = NonlinearKind::zero;
  return out;
}

}  // namespace

SolveResult solve_perforated(const Mesh& mesh, const CoefficientSet& coeffs, const NonlinearBC& nbc,
                             const ScalarField& f, const SolveOptions& opts) {
  SolveDiagnostics diag;
  CoefficientSet c = coeffs;
  c.lambda = resolve_lambda(mesh, coeffs, nbc, opts, diag);
  const auto facets = tagged_facets(mesh, true);
  const AssembledSystem sys = assemble_with(mesh, c, f, opts);
  const FacetQuadrature quad = facet_quadrature(mesh, facets);
  SolveResult r = solve_nonlinear(sys, quad, nbc, opts);
  r.diagnostics.lambda = diag.lambda;
  r.diagnostics.lambda0 = diag.lambda0;
  return r;
}

SolveResult solve_homogenized_plain(const Mesh& mesh, const CoefficientSet& coeffs, const ScalarField& f,
                                    const SolveOptions& opts) {
  opts.validate();
  SolveResult r;
  CoefficientSet c = coeffs;
  c.lambda = resolve_lambda(mesh, coeffs, NonlinearBC::zero(), opts, r.diagnostics);
  const AssembledSystem sys = assemble_with(mesh, c, f, opts);
  CSparse A = sys.K;
  CVector b = sys.load;
  apply_dirichlet(A, b, sys.dirichlet);
  StepSolver stepper(opts.linear_method, opts.linear_tol);
  r.u = DiscreteField(mesh, stepper.solve(A, b));
  const double fn = b.norm();
  r.diagnostics.relative_residual = fn > 0.0 ? (A * r.u.values - b).norm() / fn : 0.0;
  return r;
}

SolveResult solve_homogenized_delta(const Mesh& mesh, const CoefficientSet& coeffs, const SurfaceDensity& alpha0,
                                    const NonlinearBC& nbc, const ScalarField& f, const SolveOptions& opts) {
  SolveDiagnostics diag;
  const NonlinearBC eff = scaled_for_interface(nbc, alpha0);
  CoefficientSet c = coeffs;
  c.lambda = resolve_lambda(mesh, coeffs, eff, opts, diag);
  const auto facets = tagged_facets(mesh, false);
  const AssembledSystem sys = assemble_with(mesh, c, f, opts);
  const FacetQuadrature quad = facet_quadrature(mesh, facets, alpha0.as_field());
  SolveResult r = solve_nonlinear(sys, quad, eff, opts);
  r.diagnostics.lambda = diag.lambda;
  r.diagnostics.lambda0 = diag.lambda0;
  return r;
}

}  // namespace perfhom
