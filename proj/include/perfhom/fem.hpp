#pragma once

#include "perfhom/mesh.hpp"

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <complex>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace perfhom {

using Complex = std::complex<double>;
using CVector = Eigen::VectorXcd;
using RVector = Eigen::VectorXd;
using CSparse = Eigen::SparseMatrix<Complex>;
using RSparse = Eigen::SparseMatrix<double>;
using CVec3 = Eigen::Vector3cd;

using ScalarField = std::function<Complex(const Vec3&)>;
using RealField = std::function<double(const Vec3&)>;

/// Coefficients of h_0(u, v) = (A_ij d_j u, d_i v) + (A_j d_j u, v) + (A_0 u, v)
/// and the spectral shift lambda. Empty callables mean identity / zero.
struct CoefficientSet {
  int dim = 2;
  std::function<Eigen::Matrix3d(const Vec3&)> A;
  std::function<CVec3(const Vec3&)> drift;
  ScalarField potential;
  double lambda = 0.0;
  double c0 = 1.0;

  static CoefficientSet laplacian(int dim, double lambda = 0.0);
  /// Principal part evaluated at x (identity when A is empty).
  [[nodiscard]] Eigen::Matrix3d principal(const Vec3& x) const;
};

/// Sampled bounds of a coefficient set over the quadrature points of a mesh.
struct CoefficientBounds {
  double min_eigenvalue = 0.0;
  double max_eigenvalue = 0.0;
  double max_asymmetry = 0.0;
  double sup_drift = 0.0;
  double sup_potential = 0.0;
  bool real_valued = true;
};

/// Throws non_elliptic_coefficients when A is not symmetric, its smallest
/// eigenvalue drops below c0, or a coefficient is not finite.
CoefficientBounds check_coefficients(const Mesh& mesh, const CoefficientSet& coeffs);

enum class NonlinearKind { zero, linear, saturating };

/// a(x, u) on the cavity boundaries (or, weighted by alpha^0, on S).
/// linear: sigma(x) u; saturating: sigma(x) u / (1 + |u|).
struct NonlinearBC {
  NonlinearKind kind = NonlinearKind::zero;
  ScalarField sigma;
  Complex sigma_const = 0.0;
  /// Lipschitz constant in u and bound on |grad_x a| / |u|.
  double a0 = 0.0;
  double a1 = 0.0;

  static NonlinearBC zero();
  static NonlinearBC linear(Complex sigma);
  static NonlinearBC saturating(Complex sigma);
  static NonlinearBC linear(ScalarField sigma, double sup_sigma, double sup_grad_sigma);
  static NonlinearBC saturating(ScalarField sigma, double sup_sigma, double sup_grad_sigma);

  [[nodiscard]] Complex sigma_at(const Vec3& x) const;
  [[nodiscard]] Complex value(const Vec3& x, Complex u) const;
  /// (da/dRe u, da/dIm u).
  [[nodiscard]] std::pair<Complex, Complex> derivatives(const Vec3& x, Complex u) const;
  /// a(x, u) / u, continuous at u = 0.
  [[nodiscard]] Complex secant(const Vec3& x, Complex u) const;
  /// True when a(x, u) is complex-linear in u.
  [[nodiscard]] bool holomorphic() const { return kind != NonlinearKind::saturating; }
  /// Real u gives real a(x, u) at the sample points.
  [[nodiscard]] bool real_valued(std::span<const Vec3> samples) const;
  /// Re (a(x,u) - a(x,v)) conj(u - v) >= 0 for all u, v: sigma real and >= 0.
  [[nodiscard]] bool monotone(std::span<const Vec3> samples) const;
};

/// A P1 finite-element function. The mesh is not owned.
struct DiscreteField {
  const Mesh* mesh = nullptr;
  CVector values;

  DiscreteField() = default;
  DiscreteField(const Mesh& m, CVector v);
  static DiscreteField zeros(const Mesh& m);
  static DiscreteField interpolate(const Mesh& m, const ScalarField& f);
  [[nodiscard]] std::size_t size() const { return static_cast<std::size_t>(values.size()); }
  /// Value at x by point location; throws point_off_manifold when outside.
  [[nodiscard]] Complex evaluate(const Vec3& x) const;
};

/// Quadrature on a set of boundary or interface facets with P1 basis values.
struct FacetQuadrature {
  int dim = 2;
  std::vector<Vec3> points;
  /// Weights already multiplied by the optional surface density.
  std::vector<double> weights;
  /// Facet nodes and basis values at each point (dim entries each).
  std::vector<std::array<int, 3>> nodes;
  std::vector<std::array<double, 3>> basis;
  [[nodiscard]] std::size_t size() const { return points.size(); }
  [[nodiscard]] double total_weight() const;
};

FacetQuadrature facet_quadrature(const Mesh& mesh, std::span<const std::size_t> facets,
                                 const RealField& density = {});

/// Assembled linear part. K is h_0 - lambda (u, v), row = test function.
struct AssembledSystem {
  const Mesh* mesh = nullptr;
  CSparse K;
  RSparse mass;
  RSparse stiffness;
  CVector load;
  /// 1 for nodes on the outer boundary (homogeneous Dirichlet).
  std::vector<char> dirichlet;
  bool real_valued = true;

  [[nodiscard]] std::size_t size() const { return static_cast<std::size_t>(load.size()); }
  /// H1 Gram matrix (stiffness + mass).
  [[nodiscard]] RSparse gram() const;
};

/// Quadrature of degree 2 on cells. f may be empty (zero load).
AssembledSystem assemble(const Mesh& mesh, const CoefficientSet& coeffs, const ScalarField& f = {});

/// Load vector (f, phi_i) with degree-2 quadrature.
CVector assemble_load(const Mesh& mesh, const ScalarField& f);

/// int w phi_j phi_i over the quadrature's facets, w = 1 when empty.
CSparse boundary_mass(const FacetQuadrature& quad, std::size_t n, const ScalarField& weight = {});

struct NonlinearTerms {
  CVector residual;
  CSparse jac_re;
  CSparse jac_im;
};

/// Residual r_i = (a(., u), phi_i) on the quadrature's facets and the
/// derivatives of r with respect to Re u and Im u.
NonlinearTerms boundary_nonlinear(const FacetQuadrature& quad, const NonlinearBC& nbc, const CVector& u,
                                  bool with_jacobian = true);

/// Facets of `mesh` carrying the cavity or interface tags; throws
/// missing_facet_tags when there are none.
std::vector<std::size_t> tagged_facets(const Mesh& mesh, bool cavities);

/// krylov: CG when the matrix is Hermitian, BiCGSTAB + ILUT otherwise.
/// automatic: direct factorization for moderate sizes, krylov beyond.
enum class LinearMethod { automatic, krylov, cg, bicgstab, direct };

struct LinearSolveInfo {
  LinearMethod method = LinearMethod::automatic;
  int iterations = 0;
  double relative_residual = 0.0;
};

/// Solves A x = b to relative residual `tol`. Throws no_convergence when an
/// iterative method hits its cap (automatic falls back to a factorization).
CVector solve_sparse(const CSparse& A, const CVector& b, double tol, LinearMethod method = LinearMethod::automatic,
                     LinearSolveInfo* info = nullptr);

/// Row/column elimination of the masked nodes with prescribed values.
void apply_dirichlet(CSparse& A, CVector& b, const std::vector<char>& mask, const CVector* values = nullptr);

/// Solves the assembled system with homogeneous Dirichlet data.
DiscreteField solve_linear(const AssembledSystem& system, const CVector& rhs, double tol = 1e-10,
                           LinearMethod method = LinearMethod::krylov, LinearSolveInfo* info = nullptr);

/// Data for the boundary-term absorption in the coercivity threshold.
struct GeometryConstants {
  /// Trace constant for ||u||^2 on the perforation boundary; heuristic.
  double trace = 1.0;
};

GeometryConstants geometry_constants(const PerforationLayout& layout);

struct Lambda0Estimate {
  double lambda0 = 0.0;
  double C1 = 0.0;
  double C2 = 0.0;
};

/// lambda0 = -C1 - C2 - c0/4, C1 = n sup|A_j|^2 / c0 + sup|A_0|. C2 vanishes for
/// monotone a; otherwise C2 = 4 (a0 trace)^2 / c0.
Lambda0Estimate estimate_lambda0(const CoefficientSet& coeffs, const NonlinearBC& nbc, const GeometryConstants& geo,
                                 const Mesh* sample_mesh = nullptr);

struct CoercivityReport {
  /// min over random v of Re(v^H K v) / (v^H G v).
  double min_sampled_ratio = 0.0;
  /// Smallest generalized eigenvalue of (Re K_sym, G) by inverse iteration.
  double min_eigenvalue = 0.0;
  int samples = 0;
};

CoercivityReport check_coercivity(const AssembledSystem& system, int samples = 100, std::uint64_t seed = 1);

struct Norms {
  double l2 = 0.0;
  double h1_semi = 0.0;
  double h1 = 0.0;
};

/// Exact norms of a P1 field over the simplices selected by `mask` (all when empty).
Norms norms(const Mesh& mesh, const CVector& u, const std::vector<char>& mask = {});
Norms norms(const DiscreteField& u, const std::vector<char>& mask = {});

/// Norms of u_h - u for a closed-form u with gradient, by a degree-4 rule
/// on triangles (degree 2 on tetrahedra).
Norms error_norms(const Mesh& mesh, const CVector& uh, const ScalarField& exact,
                  const std::function<CVec3(const Vec3&)>& exact_grad, const std::vector<char>& mask = {});

/// Transfers a field onto another mesh: by index for nested meshes, by
/// barycentric interpolation otherwise.
DiscreteField transfer(const DiscreteField& source, const Mesh& target, bool nested = false);

void write_matrix_market(const CSparse& A, const std::string& path);
/// Rows "x1,...,xn,Re(u),Im(u)".
void write_solution_csv(const DiscreteField& u, const std::string& path);

}  // namespace perfhom
