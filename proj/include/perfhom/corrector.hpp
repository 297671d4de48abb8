#pragma once

#include "perfhom/alpha.hpp"
#include "perfhom/fem.hpp"
#include "perfhom/geometry.hpp"

#include <array>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace perfhom {

/// beta(xi') = alpha^eps(x') - alpha^0 in cell coordinates xi' = (x' - anchor) / eps,
/// sampled on a uniform grid over the cell prod(0, b_i).
struct BetaField {
  int dim = 2;
  std::array<double, 2> periods{1.0, 1.0};
  int grid = 256;
  /// Lattice anchor on S: cells are anchor + eps (b_i j_i + [0, b_i)).
  Vec3 anchor = Vec3::Zero();
  /// Row-major over the tangential axes, xi_i = b_i g_i / grid.
  std::vector<double> values;
  double mean = 0.0;
  double sup = 0.0;
  /// Exact beta at any xi' (wrapped into the cell).
  std::function<double(const Vec3&)> exact;

  [[nodiscard]] std::size_t size() const { return values.size(); }
};

/// Samples the interior cell of a flat strictly periodic layout. Throws
/// nonzero_mean when the cell average differs from 0 by more than mean_tol.
BetaField beta_field(const PerforationLayout& layout, std::span<const double> periods, const Mollifier& mollifier,
                     const SurfaceDensity& alpha0, int grid = 256, double mean_tol = 1e-8);

/// A synthetic periodic datum, e.g. cos(2 pi xi_1).
BetaField beta_from_function(int dim, std::span<const double> periods, const std::function<double(const Vec3&)>& beta,
                             int grid = 256, double mean_tol = 1e-8);

/// Psi(xi) = sum_{m != 0} gamma_m exp(i k_m . xi') exp(-|k_m| xi_n), k_m = 2 pi (m_i / b_i):
/// harmonic, periodic in xi', dPsi/dxi_n = -beta on xi_n = 0 up to truncation.
struct FourierCorrector {
  int dim = 2;
  std::array<double, 2> periods{1.0, 1.0};
  int order = 64;
  int grid = 256;
  Vec3 anchor = Vec3::Zero();
  /// Indexed by (m_1 + K) [(2K + 1) (m_2 + K) + ...]; see coefficient().
  std::vector<Complex> gamma;
  /// max |dPsi/dxi_n + beta| on the half-shifted grid at xi_n = 0.
  double boundary_residual = 0.0;

  [[nodiscard]] int modes_per_axis() const { return 2 * order + 1; }
  [[nodiscard]] Complex coefficient(int m1, int m2 = 0) const;
  [[nodiscard]] double value(const Vec3& xi) const;
  /// (dPsi/dxi_1, [dPsi/dxi_2,] dPsi/dxi_n) in the first dim slots.
  [[nodiscard]] Vec3 gradient(const Vec3& xi) const;
  /// Sum of the second derivatives, each summed termwise.
  [[nodiscard]] double laplacian(const Vec3& xi) const;
  [[nodiscard]] double gamma_l1() const;
  /// Smallest nonzero |k_m|.
  [[nodiscard]] double k_min() const;
};

/// Throws truncation_insufficient when boundary_residual > tol * max(sup|beta|, tiny).
FourierCorrector fourier_corrector(const BetaField& beta, int order = 64, double tol = 1e-5);

/// Sampled sup-norms of the rescaled corrector Psi^eps(x) = eps Psi(x / eps) on the
/// part of the domain above S.
struct CorrectorResidual {
  double eps = 0.0;
  double psi_sup = 0.0;
  double lap_sup = 0.0;
  double outer_flux = 0.0;
  double s_mismatch = 0.0;
  double mu = 0.0;
  double kappa = 0.0;
};

CorrectorResidual corrector_residual_mu(const FourierCorrector& psi, const PerforationLayout& layout,
                                        const Mollifier& mollifier, const SurfaceDensity& alpha0);

/// kappa = c_cal sqrt(mu).
double kappa_bound(double mu, double c_cal);
/// c_cal = factor * kappa0 / sqrt(mu0), frozen from the coarsest eps.
double calibrate_kappa(double mu0, double kappa0, double factor = 2.0);

/// Rows "eps,psi_sup,lap_sup,outer_flux,s_mismatch,mu,kappa".
void write_corrector_csv(std::span<const CorrectorResidual> rows, const std::string& path);

}  // namespace perfhom
