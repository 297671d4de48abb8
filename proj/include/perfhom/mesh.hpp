#pragma once

#include "perfhom/geometry.hpp"

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace perfhom {

/// Facet tags: outer boundary, the interface S, and cavity k as kTagCavityBase + k.
inline constexpr int kTagOuter = 0;
inline constexpr int kTagInterface = 1;
inline constexpr int kTagCavityBase = 2;

[[nodiscard]] inline bool is_cavity_tag(int tag) { return tag >= kTagCavityBase; }

struct Facet {
  std::array<int, 3> v{-1, -1, -1};
  int tag = kTagOuter;
};

/// Conforming simplicial mesh (triangles or tetrahedra), positively oriented.
struct Mesh {
  int dim = 2;
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 4>> simplices;
  std::vector<Facet> facets;
  double h = 0.0;

  [[nodiscard]] std::size_t num_vertices() const { return vertices.size(); }
  [[nodiscard]] std::size_t num_simplices() const { return simplices.size(); }
  [[nodiscard]] int nodes_per_simplex() const { return dim + 1; }
  [[nodiscard]] int nodes_per_facet() const { return dim; }

  /// Signed volume (area in 2D) of simplex e.
  [[nodiscard]] double simplex_volume(std::size_t e) const;
  [[nodiscard]] double facet_measure(std::size_t f) const;
  [[nodiscard]] Vec3 simplex_centroid(std::size_t e) const;
  [[nodiscard]] double total_volume() const;
  /// Indices of facets whose tag satisfies the predicate.
  [[nodiscard]] std::vector<std::size_t> facets_with_tag(int tag) const;
  [[nodiscard]] std::vector<std::size_t> cavity_facets() const;
  [[nodiscard]] std::vector<std::size_t> interface_facets() const;
  /// Number of distinct cavity tags present.
  [[nodiscard]] int num_cavity_groups() const;
  /// Vertices lying on outer-tagged facets.
  [[nodiscard]] std::vector<char> outer_vertex_mask() const;
};

struct MeshOptions {
  /// Far-field element size.
  double h = 0.05;
  /// Ratio between `h` and the element size on the cavity boundaries.
  double refine_factor = 8.0;
  /// Growth rate of the size field away from the cavities and from S.
  double grading = 0.3;
  /// Element size on S (0: same as h).
  double band_h = 0.0;
  int min_cavity_segments = 8;
  std::uint64_t seed = 7;
};

/// Perforated mesh together with an unperforated mesh of the same box that
/// carries S as interface facets.
struct MeshPair {
  Mesh perforated;
  Mesh companion;
  /// True when the perforated mesh is a submesh of the companion: companion
  /// vertex i is perforated vertex i for i < perforated.num_vertices(), and
  /// every perforated simplex is a companion simplex (2D meshes). Otherwise
  /// fields move between the two meshes by point location.
  bool nested = false;
};

Mesh mesh_perforated(const PerforationLayout& layout, const MeshOptions& options);
MeshPair mesh_perforated_with_companion(const PerforationLayout& layout, const MeshOptions& options);

/// Structured mesh of the box with S = {x_n = s0} as a union of interior facets.
Mesh mesh_interface(const Box& domain, double s0, double h);

/// Structured simplicial mesh of a tensor-product grid (axis node lists).
/// Boundary facets are tagged outer; facets on the plane x_n = interface_level
/// (if given) are tagged as interface.
Mesh mesh_tensor(int dim, std::span<const std::vector<double>> axes,
                 std::optional<double> interface_level = std::nullopt);

void write_mesh(const Mesh& mesh, std::ostream& os);
Mesh read_mesh(std::istream& is);
void write_mesh_file(const Mesh& mesh, const std::string& path);
Mesh read_mesh_file(const std::string& path);

/// Barycentric point location by uniform bucketing of simplices.
class PointLocator {
 public:
  explicit PointLocator(const Mesh& mesh);

  struct Hit {
    std::size_t simplex = 0;
    std::array<double, 4> bary{};
  };
  [[nodiscard]] std::optional<Hit> locate(const Vec3& x, double tol = 1e-10) const;

 private:
  const Mesh* mesh_;
  Vec3 lo_;
  Vec3 cell_;
  std::array<int, 3> n_{1, 1, 1};
  std::vector<std::vector<std::uint32_t>> buckets_;

  [[nodiscard]] std::array<double, 4> barycentric(std::size_t e, const Vec3& x) const;
};

}  // namespace perfhom
