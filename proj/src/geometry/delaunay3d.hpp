#pragma once

#include "perfhom/geometry.hpp"

#include <array>
#include <vector>

namespace perfhom::detail {

/// Incremental Bowyer-Watson tetrahedralization of an axis-aligned box.
/// Points may lie on the box faces and edges; tetrahedra are positively oriented.
class Delaunay3D {
 public:
  struct Tet {
    std::array<int, 4> v{};
    /// n[i]: neighbour across the face opposite v[i], -1 on the hull.
    std::array<int, 4> n{-1, -1, -1, -1};
    bool alive = true;
  };

  Delaunay3D(const Vec3& lo, const Vec3& hi);

  /// Inserts p and returns its vertex index. Box corners are vertices 0..7.
  int insert(const Vec3& p);

  [[nodiscard]] const std::vector<Vec3>& points() const { return pts_; }
  [[nodiscard]] std::vector<Tet> compact() const;

 private:
  std::vector<Vec3> pts_;
  std::vector<Tet> tets_;
  std::vector<int> free_;
  std::vector<unsigned> stamp_;
  unsigned epoch_ = 0;
  int last_ = 0;
  unsigned walk_rng_ = 2463534242U;
  double insphere_sign_ = 1.0;

  int locate(const Vec3& p);
  int new_tet(const Tet& t);
  [[nodiscard]] double orient_replaced(const Tet& t, int i, const Vec3& p) const;
  [[nodiscard]] bool in_sphere(const Tet& t, const Vec3& p) const;
};

/// det[b - a, c - a, d - a].
double orient3d(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d);

}  // namespace perfhom::detail
