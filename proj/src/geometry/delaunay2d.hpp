#pragma once

#include <Eigen/Core>

#include <array>
#include <vector>

namespace perfhom::detail {

using Vec2 = Eigen::Vector2d;

/// Incremental Bowyer-Watson triangulation of an axis-aligned rectangle.
/// All inserted points must lie in the closed rectangle; points on its sides
/// split hull edges. Triangles are counter-clockwise.
class Delaunay2D {
 public:
  struct Tri {
    std::array<int, 3> v{};
    /// n[i]: neighbour across the edge opposite v[i], -1 on the hull.
    std::array<int, 3> n{-1, -1, -1};
    bool alive = true;
  };

  Delaunay2D(const Vec2& lo, const Vec2& hi);

  /// Inserts p and returns its vertex index. Corners are vertices 0..3.
  int insert(const Vec2& p);

  [[nodiscard]] const std::vector<Vec2>& points() const { return pts_; }
  /// Live triangles with neighbour indices renumbered accordingly.
  [[nodiscard]] std::vector<Tri> compact() const;

 private:
  std::vector<Vec2> pts_;
  std::vector<Tri> tris_;
  std::vector<int> free_;
  std::vector<unsigned> stamp_;
  unsigned epoch_ = 0;
  int last_ = 0;
  unsigned walk_rng_ = 12345;

  int locate(const Vec2& p);
  int new_tri(const Tri& t);
};

double orient2d(const Vec2& a, const Vec2& b, const Vec2& c);
/// Positive when d lies inside the circumcircle of the counter-clockwise triangle abc.
double incircle(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d);

}  // namespace perfhom::detail
