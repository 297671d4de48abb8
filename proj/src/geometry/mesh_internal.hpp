#pragma once

#include "perfhom/mesh.hpp"

#include <functional>
#include <vector>

namespace perfhom::detail {

/// Rebuilds `mesh.facets`: faces used by one simplex are tagged by
/// `boundary_tag` (default outer); faces used by two simplices get the tag
/// returned by `interior_tag`, or are skipped when it returns a negative value.
void build_facets(Mesh& mesh, const std::function<int(const Facet&)>& boundary_tag,
                  const std::function<int(const Facet&)>& interior_tag);

/// Flips simplices with negative volume so that every element is positively oriented.
void orient_positive(Mesh& mesh);

/// Permutation of `points` along a space-filling curve (Hilbert in 2D,
/// Morton in 3D), used as insertion order for the Delaunay kernels.
std::vector<std::size_t> spatial_order(const std::vector<Vec3>& points, int dim);

}  // namespace perfhom::detail
