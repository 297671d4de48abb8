#pragma once

#include "perfhom/geometry.hpp"
#include "perfhom/mesh.hpp"

#include <functional>
#include <random>
#include <vector>

namespace perfhom::detail {

/// Graded element-size field: far-field size, a band around S, and a
/// refinement zone around each cavity, all growing linearly at rate `grading`.
class SizeField {
 public:
  SizeField(const PerforationLayout& layout, const MeshOptions& options);

  [[nodiscard]] double operator()(const Vec3& x) const;
  /// Approximate signed distance to the boundary of cavity k (negative inside).
  [[nodiscard]] double cavity_distance(std::size_t k, const Vec3& x) const;
  /// Nearest cavity by signed distance, or -1 if there are none.
  [[nodiscard]] int nearest_cavity(const Vec3& x, double* distance) const;
  /// Spacing of the boundary discretization of cavity k.
  [[nodiscard]] double cavity_h(std::size_t k) const { return cavity_h_[k]; }
  [[nodiscard]] double min_size() const { return h_min_; }
  [[nodiscard]] double grading() const { return g_; }
  [[nodiscard]] const PerforationLayout& layout() const { return *layout_; }

 private:
  const PerforationLayout* layout_;
  double h_far_;
  double band_h_;
  double g_;
  double h_min_;
  std::vector<double> cavity_h_;
  std::vector<double> bound_radius_;
  /// Cavity indices sorted by the first centre coordinate.
  std::vector<std::size_t> by_x_;
  std::vector<double> x_sorted_;
  double max_bound_ = 0.0;
};

/// Parameters t_0 = t0 < ... < t_N = t1 placing points along curve(t) so that
/// consecutive points are about size(point) apart; N >= min_segments.
std::vector<double> equidistribute(const std::function<Vec3(double)>& curve, double t0, double t1,
                                   const std::function<double(const Vec3&)>& size, int min_segments);

/// Jittered leaf-centre points of a tree over the cell [lo, hi] that splits
/// along `axes` (the other coordinates stay at lo) until every leaf is no
/// larger than the size field allows. `accept(x, h(x))` filters candidates.
std::vector<Vec3> tree_points(const Vec3& lo, const Vec3& hi, const std::vector<int>& axes, const SizeField& size,
                              std::mt19937_64& rng, const std::function<bool(const Vec3&, double)>& accept);

}  // namespace perfhom::detail
