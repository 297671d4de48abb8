#include "fem_internal.hpp"

#include "perfhom/error.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>

namespace perfhom {

CoefficientSet CoefficientSet::laplacian(int dim, double lambda) {
  CoefficientSet c;
  c.dim = dim;
  c.lambda = lambda;
  c.c0 = 1.0;
  return c;
}

Eigen::Matrix3d CoefficientSet::principal(const Vec3& x) const {
  if (!A) {
    Eigen::Matrix3d I = Eigen::Matrix3d::Zero();
    for (int i = 0; i < dim; ++i) I(i, i) = 1.0;
    return I;
  }
  return A(x);
}

CoefficientBounds check_coefficients(const Mesh& mesh, const CoefficientSet& coeffs) {
  if (mesh.dim != coeffs.dim) throw Error(ErrorCode::inconsistent_mesh, "coefficient and mesh dimensions differ");
  if (!(coeffs.c0 > 0.0)) throw Error(ErrorCode::non_elliptic_coefficients, "ellipticity constant must be positive");
  CoefficientBounds b;
  b.min_eigenvalue = std::numeric_limits<double>::infinity();
  const int d = mesh.dim;
  const auto rule = detail::cell_rule(d);
  for (std::size_t e = 0; e < mesh.num_simplices(); ++e) {
    for (int q = 0; q < rule.n; ++q) {
      const Vec3 x = detail::map_point(mesh, e, rule.bary[q]);
      if (coeffs.A) {
        const Eigen::Matrix3d a = coeffs.A(x);
        const Eigen::MatrixXd blk = a.topLeftCorner(d, d);
        b.max_asymmetry = std::max(b.max_asymmetry, (blk - blk.transpose()).cwiseAbs().maxCoeff());
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (blk + blk.transpose()), Eigen::EigenvaluesOnly);
        b.min_eigenvalue = std::min(b.min_eigenvalue, es.eigenvalues().minCoeff());
        b.max_eigenvalue = std::max(b.max_eigenvalue, es.eigenvalues().maxCoeff());
        if (!blk.allFinite()) throw Error(ErrorCode::non_elliptic_coefficients, "A_ij is not finite");
      } else {
        b.min_eigenvalue = std::min(b.min_eigenvalue, 1.0);
        b.max_eigenvalue = std::max(b.max_eigenvalue, 1.0);
      }
      if (coeffs.drift) {
        const CVec3 v = coeffs.drift(x);
        if (!v.allFinite()) throw Error(ErrorCode::non_elliptic_coefficients, "A_j is not finite");
        b.sup_drift = std::max(b.sup_drift, v.head(d).norm());
        b.real_valued = b.real_valued && v.head(d).imag().isZero(0.0);
      }
      if (coeffs.potential) {
        const Complex p = coeffs.potential(x);
        if (!std::isfinite(p.real()) || !std::isfinite(p.imag())) {
          throw Error(ErrorCode::non_elliptic_coefficients, "A_0 is not finite");
        }
        b.sup_potential = std::max(b.sup_potential, std::abs(p));
        b.real_valued = b.real_valued && p.imag() == 0.0;
      }
    }
  }
  if (mesh.num_simplices() == 0) b.min_eigenvalue = coeffs.A ? 0.0 : 1.0;
  const double scale = std::max(1.0, b.max_eigenvalue);
  if (b.max_asymmetry > 1e-12 * scale) {
    throw Error(ErrorCode::non_elliptic_coefficients,
                "A_ij is not symmetric (max asymmetry " + std::to_string(b.max_asymmetry) + ")");
  }
  if (b.min_eigenvalue < coeffs.c0 * (1.0 - 1e-12)) {
    throw Error(ErrorCode::non_elliptic_coefficients, "smallest eigenvalue of A_ij " +
                                                          std::to_string(b.min_eigenvalue) + " is below c0 = " +
                                                          std::to_string(coeffs.c0));
  }
  return b;
}

NonlinearBC NonlinearBC::zero() { return {}; }

NonlinearBC NonlinearBC::linear(Complex sigma) {
  NonlinearBC n;
  n.kind = NonlinearKind::linear;
  n.sigma_const = sigma;
  n.a0 = std::abs(sigma);
  return n;
}

NonlinearBC NonlinearBC::saturating(Complex sigma) {
  NonlinearBC n = linear(sigma);
  n.kind = NonlinearKind::saturating;
  return n;
}

NonlinearBC NonlinearBC::linear(ScalarField sigma, double sup_sigma, double sup_grad_sigma) {
  NonlinearBC n;
  n.kind = NonlinearKind::linear;
  n.sigma = std::move(sigma);
  n.a0 = sup_sigma;
  n.a1 = sup_grad_sigma;
  return n;
}

NonlinearBC NonlinearBC::saturating(ScalarField sigma, double sup_sigma, double sup_grad_sigma) {
  NonlinearBC n = linear(std::move(sigma), sup_sigma, sup_grad_sigma);
  n.kind = NonlinearKind::saturating;
  return n;
}

Complex NonlinearBC::sigma_at(const Vec3& x) const { return sigma ? sigma(x) : sigma_const; }

Complex NonlinearBC::value(const Vec3& x, Complex u) const {
  switch (kind) {
    case NonlinearKind::zero:
      return 0.0;
    case NonlinearKind::linear:
      return sigma_at(x) * u;
    case NonlinearKind::saturating:
      return sigma_at(x) * u / (1.0 + std::abs(u));
  }
  return 0.0;
}

Complex NonlinearBC::secant(const Vec3& x, Complex u) const {
  switch (kind) {
    case NonlinearKind::zero:
      return 0.0;
    case NonlinearKind::linear:
      return sigma_at(x);
    case NonlinearKind::saturating:
      return sigma_at(x) / (1.0 + std::abs(u));
  }
  return 0.0;
}

std::pair<Complex, Complex> NonlinearBC::derivatives(const Vec3& x, Complex u) const {
  const Complex I(0.0, 1.0);
  switch (kind) {
    case NonlinearKind::zero:
      return {0.0, 0.0};
    case NonlinearKind::linear: {
      const Complex s = sigma_at(x);
      return {s, I * s};
    }
    case NonlinearKind::saturating: {
      const Complex s = sigma_at(x);
      const double r = std::abs(u);
      const double q = 1.0 / (1.0 + r);
      if (r == 0.0) return {s, I * s};
      // d/dx and d/dy of u / (1 + |u|), u = x + i y.
      const Complex dx = q - u * (u.real() / r) * q * q;
      const Complex dy = I * q - u * (u.imag() / r) * q * q;
      return {s * dx, s * dy};
    }
  }
  return {0.0, 0.0};
}

bool NonlinearBC::real_valued(std::span<const Vec3> samples) const {
  if (kind == NonlinearKind::zero) return true;
  if (!sigma) return sigma_const.imag() == 0.0;
  for (const auto& x : samples) {
    if (sigma(x).imag() != 0.0) return false;
  }
  return true;
}

bool NonlinearBC::monotone(std::span<const Vec3> samples) const {
  if (kind == NonlinearKind::zero) return true;
  auto ok = [](Complex s) { return s.imag() == 0.0 && s.real() >= 0.0; };
  if (!sigma) return ok(sigma_const);
  if (samples.empty()) return false;
  for (const auto& x : samples) {
    if (!ok(sigma(x))) return false;
  }
  return true;
}

}  // namespace perfhom
