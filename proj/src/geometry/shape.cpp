#include "perfhom/error.hpp"
#include "perfhom/geometry.hpp"

#include <Eigen/Geometry>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace perfhom {

namespace {

constexpr double kPi = std::numbers::pi;

double integrate(auto&& f, double a, double b) {
  using boost::math::quadrature::gauss_kronrod;
  return gauss_kronrod<double, 31>::integrate(f, a, b, 12, 1e-13);
}

void require_dim(int dim) {
  if (dim != 2 && dim != 3) {
    throw Error(ErrorCode::invalid_argument, "dimension must be 2 or 3");
  }
}

}  // namespace

Shape Shape::ball(int dim, double radius, const Vec3& offset) {
  require_dim(dim);
  if (!(radius > 0.0)) throw Error(ErrorCode::invalid_argument, "ball radius must be positive");
  Shape s;
  s.dim = dim;
  s.family = ShapeFamily::ball;
  s.offset = offset;
  s.semi_axes = Vec3::Constant(radius);
  s.boundary_measure = dim == 2 ? 2.0 * kPi * radius : 4.0 * kPi * radius * radius;
  return s;
}

Shape Shape::ellipse(int dim, const Vec3& semi_axes, const Vec3& offset) {
  require_dim(dim);
  for (int i = 0; i < dim; ++i) {
    if (!(semi_axes[i] > 0.0)) throw Error(ErrorCode::invalid_argument, "semi-axes must be positive");
  }
  Shape s;
  s.dim = dim;
  s.family = ShapeFamily::ellipse;
  s.offset = offset;
  s.semi_axes = semi_axes;
  if (dim == 2) s.semi_axes[2] = 0.0;
  s.boundary_measure = s.compute_boundary_measure();
  return s;
}

Shape Shape::star(double radius, double amplitude, int lobes, const Vec3& offset) {
  if (!(radius > 0.0) || amplitude < 0.0 || amplitude >= 1.0 || lobes < 2) {
    throw Error(ErrorCode::invalid_argument, "star shape needs radius > 0, 0 <= amplitude < 1, lobes >= 2");
  }
  Shape s;
  s.dim = 2;
  s.family = ShapeFamily::star;
  s.offset = offset;
  s.semi_axes = Vec3(radius, radius, 0.0);
  s.star_amplitude = amplitude;
  s.star_lobes = lobes;
  s.boundary_measure = s.compute_boundary_measure();
  return s;
}

double Shape::radius(double theta) const {
  switch (family) {
    case ShapeFamily::ball:
      return semi_axes[0];
    case ShapeFamily::ellipse: {
      const double a = semi_axes[0];
      const double b = semi_axes[1];
      const double c = std::cos(theta);
      const double s = std::sin(theta);
      return a * b / std::sqrt(b * b * c * c + a * a * s * s);
    }
    case ShapeFamily::star:
      return semi_axes[0] * (1.0 + star_amplitude * std::cos(star_lobes * theta));
  }
  return 0.0;
}

double Shape::radius_derivative(double theta) const {
  switch (family) {
    case ShapeFamily::ball:
      return 0.0;
    case ShapeFamily::ellipse: {
      const double a = semi_axes[0];
      const double b = semi_axes[1];
      const double c = std::cos(theta);
      const double s = std::sin(theta);
      const double q = b * b * c * c + a * a * s * s;
      return -a * b * (a * a - b * b) * s * c / (q * std::sqrt(q));
    }
    case ShapeFamily::star:
      return -semi_axes[0] * star_amplitude * star_lobes * std::sin(star_lobes * theta);
  }
  return 0.0;
}

Vec3 Shape::boundary_point(double theta) const {
  const double r = radius(theta);
  return offset + Vec3(r * std::cos(theta), r * std::sin(theta), 0.0);
}

Vec3 Shape::boundary_point(double theta, double phi) const {
  if (family == ShapeFamily::star) {
    throw Error(ErrorCode::invalid_argument, "star shapes are two-dimensional");
  }
  return offset + Vec3(semi_axes[0] * std::sin(theta) * std::cos(phi),
                       semi_axes[1] * std::sin(theta) * std::sin(phi),
                       semi_axes[2] * std::cos(theta));
}

bool Shape::contains(const Vec3& y) const {
  const Vec3 rel = y - offset;
  if (family == ShapeFamily::star) {
    const double r = std::hypot(rel[0], rel[1]);
    return r <= radius(std::atan2(rel[1], rel[0]));
  }
  double q = 0.0;
  for (int i = 0; i < dim; ++i) q += (rel[i] / semi_axes[i]) * (rel[i] / semi_axes[i]);
  return q <= 1.0;
}

double Shape::inscribed_radius() const {
  switch (family) {
    case ShapeFamily::ball:
      return semi_axes[0];
    case ShapeFamily::ellipse:
      return semi_axes.head(dim).minCoeff();
    case ShapeFamily::star:
      return semi_axes[0] * (1.0 - star_amplitude);
  }
  return 0.0;
}

double Shape::circumradius() const {
  const double off = offset.head(dim).norm();
  switch (family) {
    case ShapeFamily::ball:
      return off + semi_axes[0];
    case ShapeFamily::ellipse:
      return off + semi_axes.head(dim).maxCoeff();
    case ShapeFamily::star:
      return off + semi_axes[0] * (1.0 + star_amplitude);
  }
  return 0.0;
}

double Shape::compute_boundary_measure() const {
  if (dim == 2) {
    auto speed = [this](double t) {
      const double r = radius(t);
      const double dr = radius_derivative(t);
      return std::sqrt(r * r + dr * dr);
    };
    // Split at quarter turns so that the adaptive rule sees smooth pieces.
    double total = 0.0;
    for (int q = 0; q < 4; ++q) total += integrate(speed, q * kPi / 2, (q + 1) * kPi / 2);
    return total;
  }
  if (family == ShapeFamily::star) {
    throw Error(ErrorCode::invalid_argument, "star shapes are two-dimensional");
  }
  const double a = semi_axes[0];
  const double b = semi_axes[1];
  const double c = semi_axes[2];
  auto area_density = [&](double theta, double phi) {
    const double st = std::sin(theta);
    const double ct = std::cos(theta);
    const double sp = std::sin(phi);
    const double cp = std::cos(phi);
    const Vec3 dt(a * ct * cp, b * ct * sp, -c * st);
    const Vec3 dp(-a * st * sp, b * st * cp, 0.0);
    return dt.cross(dp).norm();
  };
  auto over_phi = [&](double theta) {
    double s = 0.0;
    for (int q = 0; q < 4; ++q) {
      s += integrate([&](double phi) { return area_density(theta, phi); }, q * kPi / 2, (q + 1) * kPi / 2);
    }
    return s;
  };
  return integrate(over_phi, 0.0, kPi / 2) + integrate(over_phi, kPi / 2, kPi);
}

std::string to_string(ShapeFamily family) {
  switch (family) {
    case ShapeFamily::ball: return "ball";
    case ShapeFamily::ellipse: return "ellipse";
    case ShapeFamily::star: return "star";
  }
  return "ball";
}

ShapeFamily shape_family_from_string(const std::string& name) {
  if (name == "ball" || name == "disk") return ShapeFamily::ball;
  if (name == "ellipse" || name == "ellipsoid") return ShapeFamily::ellipse;
  if (name == "star" || name == "star-polygon") return ShapeFamily::star;
  throw Error(ErrorCode::invalid_argument, "unknown shape family '" + name + "'");
}

}  // namespace perfhom
