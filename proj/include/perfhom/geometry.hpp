#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace perfhom {

using Vec3 = Eigen::Vector3d;

/// Axis-aligned box. Only the first `dim` coordinates are meaningful.
struct Box {
  int dim = 2;
  Vec3 lo = Vec3::Zero();
  Vec3 hi = Vec3::Ones();

  [[nodiscard]] double extent(int axis) const { return hi[axis] - lo[axis]; }
  [[nodiscard]] double measure() const;
  [[nodiscard]] bool contains(const Vec3& x, double tol = 0.0) const;
  /// Distance from an interior point to the boundary of the box.
  [[nodiscard]] double distance_to_boundary(const Vec3& x) const;
};

enum class ShapeFamily { ball, ellipse, star };

/// Unit cavity shape. The physical cavity around a centre M is
/// {x : (x - M) / (eps * eta) in shape}. Ellipses are axis aligned; the star
/// family is the smooth 2D curve r(t) = r0 (1 + a cos(m t)) about `offset`.
struct Shape {
  int dim = 2;
  ShapeFamily family = ShapeFamily::ball;
  Vec3 offset = Vec3::Zero();
  Vec3 semi_axes = Vec3::Constant(0.25);
  double star_amplitude = 0.0;
  int star_lobes = 0;
  /// |boundary| in unit coordinates, filled in by the factories.
  double boundary_measure = 0.0;

  static Shape ball(int dim, double radius, const Vec3& offset = Vec3::Zero());
  static Shape ellipse(int dim, const Vec3& semi_axes, const Vec3& offset = Vec3::Zero());
  static Shape star(double radius, double amplitude, int lobes, const Vec3& offset = Vec3::Zero());

  /// Polar radius about `offset` (2D only).
  [[nodiscard]] double radius(double theta) const;
  [[nodiscard]] double radius_derivative(double theta) const;
  /// Boundary point relative to the cavity centre, 2D polar parameter.
  [[nodiscard]] Vec3 boundary_point(double theta) const;
  /// Boundary point of the 3D ellipsoid, polar angle `theta`, azimuth `phi`.
  [[nodiscard]] Vec3 boundary_point(double theta, double phi) const;
  [[nodiscard]] bool contains(const Vec3& y) const;
  /// Radius of the largest ball about `offset` inside the shape.
  [[nodiscard]] double inscribed_radius() const;
  /// max |y| over the shape (ball about the origin containing it).
  [[nodiscard]] double circumradius() const;
  /// |boundary| by high-order quadrature.
  [[nodiscard]] double compute_boundary_measure() const;
};

struct LayoutConstants {
  double R0 = 0.5;
  double R1 = 0.2;
  double R2 = 0.4;
  double b = 1.2;
  double tau0 = 1.0;
};

/// Cavity geometry along the flat manifold S = {x_n = s0} inside `domain`.
struct PerforationLayout {
  int dim = 2;
  Box domain;
  double s0 = 0.0;
  double eps = 0.125;
  double eta = 1.0;
  LayoutConstants constants;
  std::vector<Vec3> centers;
  std::vector<Shape> shapes;
  /// Cavities removed at construction because they came too close to the boundary.
  int dropped = 0;

  [[nodiscard]] std::size_t size() const { return centers.size(); }
  [[nodiscard]] int normal_axis() const { return dim - 1; }
  [[nodiscard]] double cavity_scale() const { return eps * eta; }
  [[nodiscard]] Vec3 projected_center(std::size_t k) const;
  /// Measure of S (length in 2D, area in 3D).
  [[nodiscard]] double manifold_measure() const;
  /// Physical cavity boundary measure (eps eta)^{n-1} |d omega_k|.
  [[nodiscard]] double physical_boundary_measure(std::size_t k) const;
  /// Index of the cavity containing x, or -1.
  [[nodiscard]] int cavity_containing(const Vec3& x) const;
};

enum class LayoutKind { periodic, perturbed_periodic, clustered, explicit_list };

/// eta(eps) = coefficient * eps^exponent, clamped to (0, 1].
struct EtaRule {
  double coefficient = 1.0;
  double exponent = 0.0;
  [[nodiscard]] double operator()(double eps) const;
};

struct LayoutParams {
  int dim = 2;
  Box domain;
  double s0 = 0.0;
  LayoutConstants constants;
  Shape shape;
  /// Cell periods b_i in units of eps (tangential axes).
  std::array<double, 2> periods{1.0, 1.0};
  /// Tangential offset of the centre inside the periodicity cell, units of eps.
  std::array<double, 2> cell_offset{0.5, 0.5};
  /// Offset of the centres from S along the normal, units of eps (|.| <= R0).
  double normal_offset = 0.0;
  /// Perturbed-periodic: centres move by at most `perturbation * eps`.
  double perturbation = 0.0;
  /// Perturbed-periodic: relative shape rescaling in [1 - s, 1 + s].
  double size_perturbation = 0.0;
  std::uint64_t seed = 1;
  /// Clustered: extent = cluster_extent * eps^(1 - cluster_beta) per tangential axis.
  double cluster_beta = 0.25;
  double cluster_extent = 1.0;
  /// Clustered: lattice pitch inside a cluster, units of eps.
  double cluster_pitch = 1.0;
  /// Clustered: cluster centres given by their tangential coordinates.
  std::vector<Vec3> cluster_centers;
  /// Explicit layouts.
  std::vector<Vec3> centers;
  std::vector<Shape> shapes;
};

PerforationLayout make_layout(LayoutKind kind, const LayoutParams& params, double eps,
                              const EtaRule& eta_rule = {});

struct ConditionCheck {
  std::string name;
  bool pass = true;
  double margin = 0.0;
  std::string detail;
};

struct ValidationReport {
  bool pass = true;
  /// min |M_i - M_k| / (2 b R2 eps); passes when >= 1.
  double min_gap_ratio = 0.0;
  /// max dist(M_k, S) / eps; passes when <= R0.
  double max_offset_ratio = 0.0;
  double min_inscribed_radius = 0.0;
  double max_circumradius = 0.0;
  double sup_boundary_measure = 0.0;
  /// min distance between a cavity's bounding ball and the outer boundary.
  double min_domain_clearance = 0.0;
  std::vector<ConditionCheck> checks;
};

ValidationReport validate_layout(const PerforationLayout& layout);

std::string to_string(LayoutKind kind);
LayoutKind layout_kind_from_string(const std::string& name);
std::string to_string(ShapeFamily family);
ShapeFamily shape_family_from_string(const std::string& name);

void to_json(nlohmann::json& j, const Box& box);
void from_json(const nlohmann::json& j, Box& box);
void to_json(nlohmann::json& j, const Shape& shape);
void from_json(const nlohmann::json& j, Shape& shape);
void to_json(nlohmann::json& j, const LayoutConstants& c);
void from_json(const nlohmann::json& j, LayoutConstants& c);
void to_json(nlohmann::json& j, const PerforationLayout& layout);
void from_json(const nlohmann::json& j, PerforationLayout& layout);
void to_json(nlohmann::json& j, const ValidationReport& report);

}  // namespace perfhom
