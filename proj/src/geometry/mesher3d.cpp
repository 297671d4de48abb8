#include "delaunay3d.hpp"
#include "mesh_internal.hpp"
#include "sizing.hpp"

#include "perfhom/error.hpp"
#include "perfhom/mesh.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <unordered_map>

namespace perfhom::detail {

namespace {

/// Boundary-conforming tetrahedral mesh of the box minus ball/ellipsoid cavities:
/// cavity surfaces are sampled densely, the point set is tetrahedralized, and
/// each cavity is carved by a flood fill bounded by its surface triangles.
class Mesher3D {
 public:
  Mesher3D(const PerforationLayout& layout, const MeshOptions& options, std::uint64_t seed)
      : L_(layout), opt_(options), size_(layout, options), rng_(seed) {}

  Mesh run();

 private:
  const PerforationLayout& L_;
  const MeshOptions& opt_;
  SizeField size_;
  std::mt19937_64 rng_;
  std::vector<Vec3> pts_;
  /// -1: free; 2k: on the surface of cavity k; 2k + 1: inside cavity k.
  std::vector<int> role_;

  int add(const Vec3& p, int role) {
    pts_.push_back(p);
    role_.push_back(role);
    return static_cast<int>(pts_.size()) - 1;
  }
  void box_points();
  void cavity_points();
  void interior_points();
};

void Mesher3D::box_points() {
  const Box& box = L_.domain;
  for (int k = 0; k < 8; ++k) {
    add(Vec3((k & 1) ? box.hi[0] : box.lo[0], (k & 2) ? box.hi[1] : box.lo[1], (k & 4) ? box.hi[2] : box.lo[2]), -1);
  }
  auto h = [this](const Vec3& x) { return size_(x); };
  // Edges.
  for (int a = 0; a < 3; ++a) {
    for (int m = 0; m < 4; ++m) {
      Vec3 p = box.lo;
      int bit = 0;
      for (int b = 0; b < 3; ++b) {
        if (b == a) continue;
        p[b] = (m >> bit & 1) ? box.hi[b] : box.lo[b];
        ++bit;
      }
      Vec3 q = p;
      p[a] = box.lo[a];
      q[a] = box.hi[a];
      auto line = [p, q](double t) { return Vec3(p + t * (q - p)); };
      const auto params = equidistribute(line, 0.0, 1.0, h, 1);
      for (std::size_t j = 1; j + 1 < params.size(); ++j) add(line(params[j]), -1);
    }
  }
  // Faces.
  for (int a = 0; a < 3; ++a) {
    std::vector<int> axes;
    for (int b = 0; b < 3; ++b) {
      if (b != a) axes.push_back(b);
    }
    for (int side = 0; side < 2; ++side) {
      Vec3 lo = box.lo;
      Vec3 hi = box.hi;
      lo[a] = hi[a] = side ? box.hi[a] : box.lo[a];
      auto accept = [&](const Vec3& p, double hp) {
        for (int b : axes) {
          if (p[b] - box.lo[b] < 0.6 * hp || box.hi[b] - p[b] < 0.6 * hp) return false;
        }
        return true;
      };
      for (const auto& p : tree_points(lo, hi, axes, size_, rng_, accept)) add(p, -1);
    }
  }
}

void Mesher3D::cavity_points() {
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (std::size_t k = 0; k < L_.size(); ++k) {
    const Shape& s = L_.shapes[k];
    if (s.family == ShapeFamily::star) throw Error(ErrorCode::invalid_argument, "star cavities are 2D only");
    const double scale = L_.cavity_scale();
    const double area = L_.physical_boundary_measure(k);
    const double hc = size_.cavity_h(k);
    const int n = std::max(24, static_cast<int>(std::ceil(area / (0.866 * hc * hc))));
    const Vec3 centre = L_.centers[k] + scale * s.offset;
    // Random rotation of the spiral decorrelates neighbouring cavities.
    std::uniform_real_distribution<double> unit(0.0, 2.0 * std::numbers::pi);
    const double spin = unit(rng_);
    for (int i = 0; i < n; ++i) {
      const double z = 1.0 - (2.0 * i + 1.0) / n;
      const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
      const double phi = golden * i + spin;
      const Vec3 u(r * std::cos(phi), r * std::sin(phi), z);
      add(centre + scale * u.cwiseProduct(s.semi_axes), static_cast<int>(2 * k));
    }
    add(centre, static_cast<int>(2 * k + 1));
  }
}

void Mesher3D::interior_points() {
  const Box& box = L_.domain;
  auto accept = [&](const Vec3& p, double hp) {
    if (box.distance_to_boundary(p) < 0.6 * hp) return false;
    double d = 0.0;
    const int k = size_.nearest_cavity(p, &d);
    return k < 0 || d > 0.8 * hp;
  };
  for (const auto& p : tree_points(box.lo, box.hi, {0, 1, 2}, size_, rng_, accept)) add(p, -1);
}

Mesh Mesher3D::run() {
  box_points();
  cavity_points();
  interior_points();

  const Box& box = L_.domain;
  Delaunay3D dt(box.lo, box.hi);
  std::vector<Vec3> tail(pts_.begin() + 8, pts_.end());
  const auto order = spatial_order(tail, 3);
  std::vector<int> role(pts_.size());
  for (int i = 0; i < 8; ++i) role[static_cast<std::size_t>(i)] = -1;
  for (std::size_t i : order) {
    const int kv = dt.insert(tail[i]);
    role[static_cast<std::size_t>(kv)] = role_[i + 8];
  }
  const auto tets = dt.compact();
  const auto& kp = dt.points();

  auto on_surface = [&](int v, int k) { return role[static_cast<std::size_t>(v)] == 2 * k; };
  std::vector<int> label(tets.size(), -1);
  std::vector<std::vector<int>> seeds(L_.size());
  for (std::size_t t = 0; t < tets.size(); ++t) {
    for (int v : tets[t].v) {
      const int r = role[static_cast<std::size_t>(v)];
      if (r >= 0 && r % 2 == 1) seeds[static_cast<std::size_t>(r / 2)].push_back(static_cast<int>(t));
    }
  }
  for (std::size_t k = 0; k < L_.size(); ++k) {
    const int kk = static_cast<int>(k);
    std::vector<int> queue;
    for (int t : seeds[k]) {
      if (label[static_cast<std::size_t>(t)] < 0) {
        label[static_cast<std::size_t>(t)] = kk;
        queue.push_back(t);
      }
    }
    for (std::size_t q = 0; q < queue.size(); ++q) {
      const auto& t = tets[static_cast<std::size_t>(queue[q])];
      for (int i = 0; i < 4; ++i) {
        bool surface_face = true;
        for (int j = 0; j < 4; ++j) {
          if (j != i) surface_face = surface_face && on_surface(t.v[j], kk);
        }
        if (surface_face) continue;
        if (t.n[i] < 0) throw Error(ErrorCode::meshing_failure, "cavity fill leaked to the outer boundary");
        const auto nb = static_cast<std::size_t>(t.n[i]);
        if (label[nb] == kk) continue;
        if (label[nb] >= 0) throw Error(ErrorCode::meshing_failure, "cavity fills overlap");
        label[nb] = kk;
        queue.push_back(t.n[i]);
      }
    }
  }

  Mesh mesh;
  mesh.dim = 3;
  mesh.h = opt_.h;
  std::vector<int> new_id(kp.size(), -1);
  for (std::size_t t = 0; t < tets.size(); ++t) {
    if (label[t] >= 0) continue;
    std::array<int, 4> s{};
    for (int i = 0; i < 4; ++i) {
      const auto v = static_cast<std::size_t>(tets[t].v[i]);
      if (new_id[v] < 0) {
        new_id[v] = static_cast<int>(mesh.vertices.size());
        mesh.vertices.push_back(kp[v]);
      }
      s[i] = new_id[v];
    }
    mesh.simplices.push_back(s);
  }
  std::vector<int> faces(L_.size(), 0);
  for (std::size_t t = 0; t < tets.size(); ++t) {
    if (label[t] >= 0) continue;
    for (int i = 0; i < 4; ++i) {
      const int nb = tets[t].n[i];
      if (nb >= 0 && label[static_cast<std::size_t>(nb)] < 0) continue;
      Facet f;
      int c = 0;
      for (int j = 0; j < 4; ++j) {
        if (j != i) f.v[c++] = new_id[static_cast<std::size_t>(tets[t].v[j])];
      }
      if (nb < 0) {
        f.tag = kTagOuter;
      } else {
        const int k = label[static_cast<std::size_t>(nb)];
        f.tag = kTagCavityBase + k;
        ++faces[static_cast<std::size_t>(k)];
      }
      mesh.facets.push_back(f);
    }
  }
  // A closed triangulated sphere with V vertices has 2V - 4 faces.
  std::vector<int> verts(L_.size(), 0);
  for (int r : role) {
    if (r >= 0 && r % 2 == 0) ++verts[static_cast<std::size_t>(r / 2)];
  }
  for (std::size_t k = 0; k < L_.size(); ++k) {
    if (faces[k] != 2 * verts[k] - 4) {
      throw Error(ErrorCode::meshing_failure, "surface of cavity " + std::to_string(k) + " was not recovered (" +
                                                  std::to_string(faces[k]) + " faces for " +
                                                  std::to_string(verts[k]) + " vertices)");
    }
  }
  for (std::size_t e = 0; e < mesh.simplices.size(); ++e) {
    if (!(mesh.simplex_volume(e) > 0.0)) throw Error(ErrorCode::meshing_failure, "degenerate tetrahedron produced");
  }
  return mesh;
}

}  // namespace

MeshPair mesh_3d(const PerforationLayout& layout, const MeshOptions& options) {
  MeshPair pair;
  std::string last_error;
  const std::string prefix = std::string(to_string(ErrorCode::meshing_failure)) + ": ";
  for (int attempt = 0; attempt < 3; ++attempt) {
    try {
      pair.perforated = Mesher3D(layout, options, options.seed + 7919ULL * attempt).run();
      last_error.clear();
      break;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::meshing_failure) throw;
      last_error = std::string(e.what()).substr(prefix.size());
      spdlog::debug("mesher3d: attempt {} failed: {}", attempt, last_error);
    }
  }
  if (!last_error.empty()) throw Error(ErrorCode::meshing_failure, last_error);
  const double hs = options.band_h > 0.0 ? std::min(options.band_h, options.h) : options.h;
  pair.companion = mesh_interface(layout.domain, layout.s0, hs);
  pair.nested = false;
  return pair;
}

}  // namespace perfhom::detail
