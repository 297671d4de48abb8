#pragma once

#include "perfhom/fem.hpp"
#include "perfhom/geometry.hpp"

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace perfhom {

/// Radial bump zeta(t) = c exp(-1 / (1 - t^2)) on [0, 1), normalized so that
/// the integral of zeta(|t'|) over R^{n-1} is 1.
struct Mollifier {
  int dim = 2;
  double c = 1.0;

  [[nodiscard]] double operator()(double t) const;
  [[nodiscard]] double at_zero() const { return (*this)(0.0); }
  /// Integral of zeta(|t'|) over R^{n-1} by adaptive quadrature.
  [[nodiscard]] double plane_integral() const;
};

/// Mollifier for the manifold dimension n - 1 of a problem in R^n.
Mollifier zeta(int dim);

/// A real density on S. Pure evaluator; copies are cheap.
class SurfaceDensity {
 public:
  SurfaceDensity() = default;
  SurfaceDensity(std::function<double(const Vec3&)> eval, double sup, std::string label = {});

  static SurfaceDensity constant(double value);
  static SurfaceDensity zero() { return constant(0.0); }

  [[nodiscard]] double operator()(const Vec3& x) const { return eval_ ? eval_(x) : value_; }
  [[nodiscard]] bool is_constant() const { return !eval_; }
  /// Exact or a-priori sup-norm bound.
  [[nodiscard]] double sup() const { return sup_; }
  [[nodiscard]] const std::string& label() const { return label_; }
  [[nodiscard]] std::vector<double> sample(std::span<const Vec3> points) const;
  /// Values at the points of a facet quadrature (the cached facet samples).
  [[nodiscard]] std::vector<double> facet_values(const FacetQuadrature& quad) const;
  [[nodiscard]] RealField as_field() const;

  friend SurfaceDensity operator-(const SurfaceDensity& a, const SurfaceDensity& b);
  friend SurfaceDensity operator+(const SurfaceDensity& a, const SurfaceDensity& b);
  friend SurfaceDensity operator*(double s, const SurfaceDensity& a);

 private:
  std::function<double(const Vec3&)> eval_;
  double value_ = 0.0;
  double sup_ = 0.0;
  std::string label_;
};

/// The bump sum alpha^eps at a point of S. Throws point_off_manifold when x
/// is not on S.
double alpha_eps(const PerforationLayout& layout, const Mollifier& mollifier, const Vec3& x);

/// alpha^eps as a density; the layout is copied into the evaluator.
SurfaceDensity alpha_eps_density(const PerforationLayout& layout, const Mollifier& mollifier);

/// eta^{n-1} w / prod(b_i) for a flat strictly periodic layout.
SurfaceDensity alpha0_flat_periodic(std::span<const double> periods, double unit_boundary_measure, double eta);

/// Largest number of projected centres in one covering ball of radius R3;
/// the covering lattice on S has spacing 7 R3 / 5.
int density_count(const PerforationLayout& layout, double R3);

/// Rows "s, alpha" for points on S (s: tangential coordinate(s)).
void write_alpha_csv(const SurfaceDensity& alpha, std::span<const Vec3> points, int dim, const std::string& path);

}  // namespace perfhom
