#pragma once

#include "perfhom/fem.hpp"

#include <Eigen/Dense>

#include <array>

namespace perfhom::detail {

/// Affine data of one simplex: |volume| and gradients of the barycentric
/// coordinates (row i = grad lambda_i, first `dim` columns meaningful).
struct SimplexGeometry {
  double volume = 0.0;
  Eigen::Matrix<double, 4, 3> grad = Eigen::Matrix<double, 4, 3>::Zero();
};

inline SimplexGeometry simplex_geometry(const Mesh& m, std::size_t e) {
  const auto& s = m.simplices[e];
  const int d = m.dim;
  SimplexGeometry g;
  if (d == 2) {
    const Vec3& p0 = m.vertices[s[0]];
    const Eigen::Vector2d a = (m.vertices[s[1]] - p0).head<2>();
    const Eigen::Vector2d b = (m.vertices[s[2]] - p0).head<2>();
    const double det = a[0] * b[1] - a[1] * b[0];
    g.volume = 0.5 * std::abs(det);
    // Rows of J^{-T} for J = [a b].
    const Eigen::Vector2d g1(b[1] / det, -b[0] / det);
    const Eigen::Vector2d g2(-a[1] / det, a[0] / det);
    g.grad.row(1).head<2>() = g1;
    g.grad.row(2).head<2>() = g2;
    g.grad.row(0).head<2>() = -g1 - g2;
    return g;
  }
  Eigen::Matrix3d J;
  for (int i = 0; i < 3; ++i) J.col(i) = m.vertices[s[i + 1]] - m.vertices[s[0]];
  const double det = J.determinant();
  g.volume = std::abs(det) / 6.0;
  const Eigen::Matrix3d Jinv = J.inverse();
  for (int i = 0; i < 3; ++i) g.grad.row(i + 1) = Jinv.row(i);
  g.grad.row(0) = -(Jinv.row(0) + Jinv.row(1) + Jinv.row(2));
  return g;
}

/// Degree-2 cell rule: barycentric points and weights summing to 1.
struct CellRule {
  int n = 0;
  std::array<std::array<double, 4>, 4> bary{};
  std::array<double, 4> w{};
};

inline CellRule cell_rule(int dim) {
  CellRule r;
  if (dim == 2) {
    r.n = 3;
    const double a = 2.0 / 3.0, b = 1.0 / 6.0;
    r.bary[0] = {a, b, b, 0};
    r.bary[1] = {b, a, b, 0};
    r.bary[2] = {b, b, a, 0};
    r.w = {1.0 / 3, 1.0 / 3, 1.0 / 3, 0};
  } else {
    r.n = 4;
    const double a = 0.5854101966249685, b = 0.1381966011250105;
    for (int q = 0; q < 4; ++q) {
      for (int i = 0; i < 4; ++i) r.bary[q][i] = (i == q) ? a : b;
      r.w[q] = 0.25;
    }
  }
  return r;
}

inline Vec3 map_point(const Mesh& m, std::size_t e, const std::array<double, 4>& bary) {
  Vec3 x = Vec3::Zero();
  for (int i = 0; i <= m.dim; ++i) x += bary[i] * m.vertices[m.simplices[e][i]];
  return x;
}

}  // namespace perfhom::detail
