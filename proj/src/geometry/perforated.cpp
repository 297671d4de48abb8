#include "perfhom/error.hpp"
#include "perfhom/mesh.hpp"

namespace perfhom {

namespace detail {
MeshPair mesh_2d(const PerforationLayout& layout, const MeshOptions& options);
MeshPair mesh_3d(const PerforationLayout& layout, const MeshOptions& options);
}  // namespace detail

MeshPair mesh_perforated_with_companion(const PerforationLayout& layout, const MeshOptions& options) {
  if (layout.shapes.size() != layout.centers.size()) {
    throw Error(ErrorCode::invalid_argument, "layout needs one shape per centre");
  }
  const int n = layout.dim - 1;
  if (!(layout.s0 > layout.domain.lo[n] && layout.s0 < layout.domain.hi[n])) {
    throw Error(ErrorCode::manifold_outside_domain, "S does not cross the domain");
  }
  if (layout.dim == 2) return detail::mesh_2d(layout, options);
  if (layout.dim == 3) return detail::mesh_3d(layout, options);
  throw Error(ErrorCode::invalid_argument, "dimension must be 2 or 3");
}

Mesh mesh_perforated(const PerforationLayout& layout, const MeshOptions& options) {
  return mesh_perforated_with_companion(layout, options).perforated;
}

}  // namespace perfhom
