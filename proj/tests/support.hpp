#pragma once

#include "perfhom/geometry.hpp"

#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

namespace perfhom::testing {

/// (0,1) x (-1/2,1/2) in 2D, (0,1)^2 x (-1/2,1/2) in 3D, S = {x_n = 0}.
inline Box unit_box(int dim) {
  Box b;
  b.dim = dim;
  b.lo = dim == 2 ? Vec3(0, -0.5, 0) : Vec3(0, 0, -0.5);
  b.hi = dim == 2 ? Vec3(1, 0.5, 0) : Vec3(1, 1, 0.5);
  return b;
}

inline LayoutParams disk_params(int dim = 2, double radius = 0.25) {
  LayoutParams p;
  p.dim = dim;
  p.domain = unit_box(dim);
  p.s0 = 0.0;
  p.shape = Shape::ball(dim, radius);
  return p;
}

inline const std::vector<double>& default_sweep() {
  static const std::vector<double> eps{1.0 / 8, 1.0 / 12, 1.0 / 16, 1.0 / 24, 1.0 / 32, 1.0 / 48, 1.0 / 64};
  return eps;
}

inline std::string temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("perfhom_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

}  // namespace perfhom::testing
