#include "fem_internal.hpp"

#include "perfhom/error.hpp"

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>
#include <spdlog/spdlog.h>

#include <cmath>
#include <random>

namespace perfhom {

namespace {

bool is_real(const CSparse& A) {
  for (Eigen::Index k = 0; k < A.outerSize(); ++k) {
    for (CSparse::InnerIterator it(A, k); it; ++it) {
      if (it.value().imag() != 0.0) return false;
    }
  }
  return true;
}

bool is_hermitian(const CSparse& A) {
  const CSparse D = A - CSparse(A.adjoint());
  double dmax = 0.0;
  double amax = 0.0;
  for (Eigen::Index k = 0; k < D.outerSize(); ++k) {
    for (CSparse::InnerIterator it(D, k); it; ++it) dmax = std::max(dmax, std::abs(it.value()));
  }
  for (Eigen::Index k = 0; k < A.outerSize(); ++k) {
    for (CSparse::InnerIterator it(A, k); it; ++it) amax = std::max(amax, std::abs(it.value()));
  }
  return dmax <= 1e-12 * amax;
}

bool prefer_direct(Eigen::Index n, Eigen::Index nnz) {
  const double density = static_cast<double>(nnz) / std::max<Eigen::Index>(n, 1);
  // Planar stencils factor cheaply well past 10^5 unknowns; 3D fill grows fast.
  return n <= 30000 || (density < 10.0 && n <= 600000);
}

template <typename Scalar>
using Sparse = Eigen::SparseMatrix<Scalar>;
template <typename Scalar>
using Dense = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
Dense<Scalar> solve_direct(const Sparse<Scalar>& A, const Dense<Scalar>& B, bool hermitian) {
  if (hermitian) {
    Eigen::SimplicialLDLT<Sparse<Scalar>> ldlt(A);
    if (ldlt.info() == Eigen::Success) {
      Dense<Scalar> X = ldlt.solve(B);
      if (X.allFinite()) return X;
    }
  }
  Eigen::SparseLU<Sparse<Scalar>> lu;
  lu.analyzePattern(A);
  lu.factorize(A);
  if (lu.info() != Eigen::Success) throw Error(ErrorCode::linear_solve_failure, "sparse LU factorization failed");
  Dense<Scalar> X = lu.solve(B);
  if (!X.allFinite()) throw Error(ErrorCode::linear_solve_failure, "factorized solve produced non-finite values");
  return X;
}

template <typename Scalar, typename Solver>
Dense<Scalar> run_krylov(Solver& solver, const Sparse<Scalar>& A, const Dense<Scalar>& B, double tol, int& iters) {
  solver.setTolerance(tol);
  solver.setMaxIterations(static_cast<Eigen::Index>(std::max<Eigen::Index>(2000, 2 * A.rows())));
  solver.compute(A);
  if (solver.info() != Eigen::Success) throw Error(ErrorCode::no_convergence, "preconditioner setup failed");
  Dense<Scalar> X(B.rows(), B.cols());
  iters = 0;
  for (Eigen::Index c = 0; c < B.cols(); ++c) {
    X.col(c) = solver.solve(B.col(c));
    iters = std::max(iters, static_cast<int>(solver.iterations()));
    if (solver.info() != Eigen::Success || !X.col(c).allFinite()) {
      throw Error(ErrorCode::no_convergence, "Krylov solver stopped after " + std::to_string(solver.iterations()) +
                                                 " iterations at residual " + std::to_string(solver.error()));
    }
  }
  return X;
}

template <typename Scalar>
Dense<Scalar> solve_krylov(const Sparse<Scalar>& A, const Dense<Scalar>& B, double tol, bool cg, int& iters) {
  if (cg) {
    if constexpr (std::is_same_v<Scalar, double>) {
      Eigen::ConjugateGradient<Sparse<Scalar>, Eigen::Lower | Eigen::Upper, Eigen::IncompleteCholesky<double>> s;
      return run_krylov<Scalar>(s, A, B, tol, iters);
    } else {
      Eigen::ConjugateGradient<Sparse<Scalar>, Eigen::Lower | Eigen::Upper> s;
      return run_krylov<Scalar>(s, A, B, tol, iters);
    }
  }
  Eigen::BiCGSTAB<Sparse<Scalar>, Eigen::IncompleteLUT<Scalar>> s;
  s.preconditioner().setDroptol(1e-4);
  s.preconditioner().setFillfactor(20);
  return run_krylov<Scalar>(s, A, B, tol, iters);
}

template <typename Scalar>
Dense<Scalar> dispatch(const Sparse<Scalar>& A, const Dense<Scalar>& B, double tol, LinearMethod method,
                       bool hermitian, LinearSolveInfo& info) {
  int iters = 0;
  switch (method) {
    case LinearMethod::direct:
      info.method = LinearMethod::direct;
      return solve_direct<Scalar>(A, B, hermitian);
    case LinearMethod::cg:
      if (!hermitian) throw Error(ErrorCode::invalid_argument, "conjugate gradients need a Hermitian matrix");
      info.method = LinearMethod::cg;
      {
        auto X = solve_krylov<Scalar>(A, B, tol, true, iters);
        info.iterations = iters;
        return X;
      }
    case LinearMethod::bicgstab:
    case LinearMethod::krylov: {
      const bool cg = method == LinearMethod::krylov && hermitian;
      info.method = cg ? LinearMethod::cg : LinearMethod::bicgstab;
      auto X = solve_krylov<Scalar>(A, B, tol, cg, iters);
      info.iterations = iters;
      return X;
    }
    case LinearMethod::automatic:
      if (prefer_direct(A.rows(), A.nonZeros())) {
        info.method = LinearMethod::direct;
        return solve_direct<Scalar>(A, B, hermitian);
      }
      try {
        return dispatch<Scalar>(A, B, tol, LinearMethod::krylov, hermitian, info);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::no_convergence) throw;
        spdlog::warn("Krylov solve failed ({}); falling back to a factorization", e.what());
        info.method = LinearMethod::direct;
        return solve_direct<Scalar>(A, B, hermitian);
      }
  }
  return {};
}

}  // namespace

CVector solve_sparse(const CSparse& A, const CVector& b, double tol, LinearMethod method, LinearSolveInfo* info) {
  if (A.rows() != A.cols() || A.rows() != b.size()) {
    throw Error(ErrorCode::invalid_argument, "matrix and right-hand side sizes differ");
  }
  if (!(tol > 0.0)) throw Error(ErrorCode::invalid_argument, "tolerance must be positive");
  LinearSolveInfo local;
  LinearSolveInfo& inf = info ? *info : local;
  inf = LinearSolveInfo{};
  const double bnorm = b.norm();
  if (bnorm == 0.0) {
    inf.method = method;
    return CVector::Zero(b.size());
  }
  const bool hermitian = is_hermitian(A);
  CVector x;
  if (is_real(A)) {
    const RSparse Ar = A.real();
    const bool complex_rhs = !b.imag().isZero(0.0);
    Eigen::MatrixXd B(b.size(), complex_rhs ? 2 : 1);
    B.col(0) = b.real();
    if (complex_rhs) B.col(1) = b.imag();
    const Eigen::MatrixXd X = dispatch<double>(Ar, B, tol, method, hermitian, inf);
    x = X.col(0).cast<Complex>();
    if (complex_rhs) x.imag() = X.col(1);
  } else {
    const Eigen::MatrixXcd B = b;
    x = dispatch<Complex>(A, B, tol, method, hermitian, inf).col(0);
  }
  inf.relative_residual = (A * x - b).norm() / bnorm;
  if (!(inf.relative_residual <= std::max(10.0 * tol, 1e-9))) {
    throw Error(ErrorCode::linear_solve_failure,
                "linear solve residual " + std::to_string(inf.relative_residual) + " exceeds tolerance");
  }
  return x;
}

void apply_dirichlet(CSparse& A, CVector& b, const std::vector<char>& mask, const CVector* values) {
  const Eigen::Index n = A.rows();
  if (static_cast<Eigen::Index>(mask.size()) != n || b.size() != n) {
    throw Error(ErrorCode::inconsistent_mesh, "Dirichlet mask size differs from the system size");
  }
  if (values != nullptr) {
    CVector g = CVector::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (mask[static_cast<std::size_t>(i)]) g[i] = (*values)[i];
    }
    b -= A * g;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (mask[static_cast<std::size_t>(i)]) b[i] = g[i];
    }
  } else {
    for (Eigen::Index i = 0; i < n; ++i) {
      if (mask[static_cast<std::size_t>(i)]) b[i] = 0.0;
    }
  }
  A.prune([&](Eigen::Index i, Eigen::Index j, const Complex&) {
    return i == j || (!mask[static_cast<std::size_t>(i)] && !mask[static_cast<std::size_t>(j)]);
  });
  for (Eigen::Index i = 0; i < n; ++i) {
    if (mask[static_cast<std::size_t>(i)]) A.coeffRef(i, i) = 1.0;
  }
}

DiscreteField solve_linear(const AssembledSystem& system, const CVector& rhs, double tol, LinearMethod method,
                           LinearSolveInfo* info) {
  if (system.mesh == nullptr) throw Error(ErrorCode::invalid_argument, "system without mesh");
  CSparse A = system.K;
  CVector b = rhs;
  apply_dirichlet(A, b, system.dirichlet);
  return DiscreteField(*system.mesh, solve_sparse(A, b, tol, method, info));
}

GeometryConstants geometry_constants(const PerforationLayout& layout) {
  GeometryConstants g;
  double sup = 0.0;
  for (const auto& s : layout.shapes) sup = std::max(sup, s.boundary_measure);
  const int m = layout.dim - 1;
  // Cavity boundary measure per unit area of S for the densest admissible packing.
  g.trace = 1.0 + std::pow(layout.eta, m) * sup / std::pow(2.0 * layout.constants.b * layout.constants.R2, m);
  return g;
}

Lambda0Estimate estimate_lambda0(const CoefficientSet& coeffs, const NonlinearBC& nbc, const GeometryConstants& geo,
                                 const Mesh* sample_mesh) {
  if (!(coeffs.c0 > 0.0)) throw Error(ErrorCode::non_elliptic_coefficients, "c0 must be positive");
  double sup_drift = 0.0;
  double sup_pot = 0.0;
  if (coeffs.drift || coeffs.potential) {
    if (sample_mesh == nullptr) {
      throw Error(ErrorCode::invalid_argument, "variable lower-order coefficients need a sample mesh");
    }
    const CoefficientBounds b = check_coefficients(*sample_mesh, coeffs);
    sup_drift = b.sup_drift;
    sup_pot = b.sup_potential;
  }
  Lambda0Estimate est;
  est.C1 = coeffs.dim * sup_drift * sup_drift / coeffs.c0 + sup_pot;
  std::vector<Vec3> samples;
  if (sample_mesh != nullptr) samples = sample_mesh->vertices;
  if (!nbc.monotone(samples)) {
    const double t = nbc.a0 * geo.trace;
    est.C2 = 4.0 * t * t / coeffs.c0;
  }
  est.lambda0 = -est.C1 - est.C2 - coeffs.c0 / 4.0;
  return est;
}

CoercivityReport check_coercivity(const AssembledSystem& system, int samples, std::uint64_t seed) {
  const auto n = static_cast<Eigen::Index>(system.size());
  std::vector<Eigen::Index> free;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!system.dirichlet[static_cast<std::size_t>(i)]) free.push_back(i);
  }
  const auto m = static_cast<Eigen::Index>(free.size());
  CoercivityReport rep;
  rep.samples = samples;
  if (m == 0) return rep;
  std::vector<Eigen::Index> pos(static_cast<std::size_t>(n), -1);
  for (Eigen::Index k = 0; k < m; ++k) pos[static_cast<std::size_t>(free[static_cast<std::size_t>(k)])] = k;
  auto restrict = [&](const auto& A) {
    using S = typename std::decay_t<decltype(A)>::Scalar;
    std::vector<Eigen::Triplet<S>> t;
    for (Eigen::Index k = 0; k < A.outerSize(); ++k) {
      for (typename std::decay_t<decltype(A)>::InnerIterator it(A, k); it; ++it) {
        const auto r = pos[static_cast<std::size_t>(it.row())];
        const auto c = pos[static_cast<std::size_t>(it.col())];
        if (r >= 0 && c >= 0) t.emplace_back(r, c, it.value());
      }
    }
    Eigen::SparseMatrix<S> out(m, m);
    out.setFromTriplets(t.begin(), t.end());
    return out;
  };
  const CSparse K = restrict(system.K);
  const CSparse H = 0.5 * (K + CSparse(K.adjoint()));
  const CSparse G = restrict(system.gram()).cast<Complex>();

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  rep.min_sampled_ratio = std::numeric_limits<double>::infinity();
  for (int s = 0; s < samples; ++s) {
    CVector v(m);
    for (Eigen::Index i = 0; i < m; ++i) v[i] = Complex(normal(rng), normal(rng));
    const double num = v.dot(K * v).real();
    const double den = v.dot(G * v).real();
    rep.min_sampled_ratio = std::min(rep.min_sampled_ratio, num / den);
  }

  // Inverse iteration for the smallest eigenvalue of G^{-1} H.
  Eigen::SimplicialLDLT<CSparse> ldlt(H);
  if (ldlt.info() != Eigen::Success) {
    rep.min_eigenvalue = -std::numeric_limits<double>::infinity();
    return rep;
  }
  CVector x(m);
  for (Eigen::Index i = 0; i < m; ++i) x[i] = Complex(normal(rng), 0.0);
  double mu = 0.0;
  for (int it = 0; it < 60; ++it) {
    CVector y = ldlt.solve(G * x);
    y /= std::sqrt(y.dot(G * y).real());
    const double next = y.dot(H * y).real();
    x = y;
    if (it > 0 && std::abs(next - mu) <= 1e-10 * std::abs(next)) {
      mu = next;
      break;
    }
    mu = next;
  }
  rep.min_eigenvalue = mu;
  return rep;
}

}  // namespace perfhom
