#include "mesh_internal.hpp"

#include "perfhom/error.hpp"
#include "perfhom/mesh.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <set>
#include <unordered_map>

namespace perfhom {

namespace {

Eigen::Matrix3d edge_matrix(const Mesh& m, std::size_t e) {
  const auto& s = m.simplices[e];
  Eigen::Matrix3d J = Eigen::Matrix3d::Zero();
  for (int i = 0; i < m.dim; ++i) J.col(i) = m.vertices[s[i + 1]] - m.vertices[s[0]];
  return J;
}

struct FaceKey {
  std::array<int, 3> v;
  bool operator==(const FaceKey&) const = default;
};

struct FaceKeyHash {
  std::size_t operator()(const FaceKey& k) const noexcept {
    std::size_t h = 1469598103934665603ULL;
    for (int x : k.v) h = (h ^ static_cast<std::size_t>(x + 1)) * 1099511628211ULL;
    return h;
  }
};

FaceKey sorted_key(const Facet& f, int dim) {
  FaceKey k{{f.v[0], f.v[1], dim == 3 ? f.v[2] : -1}};
  std::sort(k.v.begin(), k.v.begin() + dim);
  return k;
}

}  // namespace

double Mesh::simplex_volume(std::size_t e) const {
  const Eigen::Matrix3d J = edge_matrix(*this, e);
  if (dim == 2) return 0.5 * (J(0, 0) * J(1, 1) - J(0, 1) * J(1, 0));
  return J.determinant() / 6.0;
}

double Mesh::facet_measure(std::size_t f) const {
  const auto& v = facets[f].v;
  if (dim == 2) return (vertices[v[1]] - vertices[v[0]]).norm();
  return 0.5 * (vertices[v[1]] - vertices[v[0]]).cross(vertices[v[2]] - vertices[v[0]]).norm();
}

Vec3 Mesh::simplex_centroid(std::size_t e) const {
  Vec3 c = Vec3::Zero();
  for (int i = 0; i <= dim; ++i) c += vertices[simplices[e][i]];
  return c / (dim + 1);
}

double Mesh::total_volume() const {
  double v = 0.0;
  for (std::size_t e = 0; e < simplices.size(); ++e) v += simplex_volume(e);
  return v;
}

std::vector<std::size_t> Mesh::facets_with_tag(int tag) const {
  std::vector<std::size_t> out;
  for (std::size_t f = 0; f < facets.size(); ++f) {
    if (facets[f].tag == tag) out.push_back(f);
  }
  return out;
}

std::vector<std::size_t> Mesh::cavity_facets() const {
  std::vector<std::size_t> out;
  for (std::size_t f = 0; f < facets.size(); ++f) {
    if (is_cavity_tag(facets[f].tag)) out.push_back(f);
  }
  return out;
}

std::vector<std::size_t> Mesh::interface_facets() const { return facets_with_tag(kTagInterface); }

int Mesh::num_cavity_groups() const {
  std::set<int> tags;
  for (const auto& f : facets) {
    if (is_cavity_tag(f.tag)) tags.insert(f.tag);
  }
  return static_cast<int>(tags.size());
}

std::vector<char> Mesh::outer_vertex_mask() const {
  std::vector<char> mask(vertices.size(), 0);
  for (const auto& f : facets) {
    if (f.tag != kTagOuter) continue;
    for (int i = 0; i < dim; ++i) mask[f.v[i]] = 1;
  }
  return mask;
}

namespace detail {

void build_facets(Mesh& mesh, const std::function<int(const Facet&)>& boundary_tag,
                  const std::function<int(const Facet&)>& interior_tag) {
  const int d = mesh.dim;
  std::unordered_map<FaceKey, std::pair<Facet, int>, FaceKeyHash> faces;
  faces.reserve(mesh.simplices.size() * (d + 1));
  for (const auto& s : mesh.simplices) {
    for (int i = 0; i <= d; ++i) {
      Facet f;
      int c = 0;
      for (int j = 0; j <= d; ++j) {
        if (j != i) f.v[c++] = s[j];
      }
      auto [it, inserted] = faces.try_emplace(sorted_key(f, d), f, 0);
      ++it->second.second;
    }
  }
  mesh.facets.clear();
  for (auto& [key, entry] : faces) {
    Facet f = entry.first;
    if (entry.second == 1) {
      f.tag = boundary_tag ? boundary_tag(f) : kTagOuter;
    } else {
      f.tag = interior_tag ? interior_tag(f) : -1;
    }
    if (f.tag >= 0) mesh.facets.push_back(f);
  }
  std::sort(mesh.facets.begin(), mesh.facets.end(), [d](const Facet& a, const Facet& b) {
    if (a.tag != b.tag) return a.tag < b.tag;
    return sorted_key(a, d).v < sorted_key(b, d).v;
  });
}

void orient_positive(Mesh& mesh) {
  for (std::size_t e = 0; e < mesh.simplices.size(); ++e) {
    if (mesh.simplex_volume(e) < 0.0) std::swap(mesh.simplices[e][0], mesh.simplices[e][1]);
  }
}

namespace {

std::uint64_t hilbert_2d(std::uint32_t x, std::uint32_t y, int order) {
  std::uint64_t d = 0;
  for (std::uint32_t s = 1U << (order - 1); s > 0; s >>= 1) {
    const std::uint32_t rx = (x & s) ? 1 : 0;
    const std::uint32_t ry = (y & s) ? 1 : 0;
    d += static_cast<std::uint64_t>(s) * s * ((3 * rx) ^ ry);
    if (ry == 0) {
      if (rx == 1) {
        x = s - 1 - (x & (s - 1)) + (x & ~(s - 1));
        y = s - 1 - (y & (s - 1)) + (y & ~(s - 1));
      }
      std::swap(x, y);
    }
  }
  return d;
}

std::uint64_t morton_3d(std::uint32_t x, std::uint32_t y, std::uint32_t z) {
  auto spread = [](std::uint64_t v) {
    v &= 0x1fffff;
    v = (v | v << 32) & 0x1f00000000ffffULL;
    v = (v | v << 16) & 0x1f0000ff0000ffULL;
    v = (v | v << 8) & 0x100f00f00f00f00fULL;
    v = (v | v << 4) & 0x10c30c30c30c30c3ULL;
    v = (v | v << 2) & 0x1249249249249249ULL;
    return v;
  };
  return spread(x) | (spread(y) << 1) | (spread(z) << 2);
}

}  // namespace

std::vector<std::size_t> spatial_order(const std::vector<Vec3>& points, int dim) {
  std::vector<std::size_t> order(points.size());
  std::iota(order.begin(), order.end(), 0);
  if (points.empty()) return order;
  Vec3 lo = points.front();
  Vec3 hi = points.front();
  for (const auto& p : points) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const int bits = dim == 2 ? 16 : 20;
  const double scale = static_cast<double>((1U << bits) - 1);
  std::vector<std::uint64_t> keys(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    std::array<std::uint32_t, 3> q{};
    for (int a = 0; a < dim; ++a) {
      const double span = std::max(hi[a] - lo[a], 1e-300);
      q[a] = static_cast<std::uint32_t>(std::lround((points[i][a] - lo[a]) / span * scale));
    }
    keys[i] = dim == 2 ? hilbert_2d(q[0], q[1], bits) : morton_3d(q[0], q[1], q[2]);
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return keys[a] < keys[b]; });
  return order;
}

}  // namespace detail

Mesh mesh_tensor(int dim, std::span<const std::vector<double>> axes, std::optional<double> interface_level) {
  if (dim != 2 && dim != 3) throw Error(ErrorCode::invalid_argument, "dimension must be 2 or 3");
  if (static_cast<int>(axes.size()) != dim) throw Error(ErrorCode::invalid_argument, "need one node list per axis");
  for (const auto& a : axes) {
    if (a.size() < 2) throw Error(ErrorCode::invalid_argument, "each axis needs at least two nodes");
    for (std::size_t i = 1; i < a.size(); ++i) {
      if (!(a[i] > a[i - 1])) throw Error(ErrorCode::invalid_argument, "axis nodes must be increasing");
    }
  }
  Mesh mesh;
  mesh.dim = dim;
  const std::size_t nx = axes[0].size();
  const std::size_t ny = axes[1].size();
  const std::size_t nz = dim == 3 ? axes[2].size() : 1;
  auto id = [&](std::size_t i, std::size_t j, std::size_t k) { return static_cast<int>(i + nx * (j + ny * k)); };
  mesh.vertices.reserve(nx * ny * nz);
  for (std::size_t k = 0; k < nz; ++k) {
    for (std::size_t j = 0; j < ny; ++j) {
      for (std::size_t i = 0; i < nx; ++i) {
        mesh.vertices.emplace_back(axes[0][i], axes[1][j], dim == 3 ? axes[2][k] : 0.0);
      }
    }
  }
  double hmax = 0.0;
  for (const auto& a : axes) {
    for (std::size_t i = 1; i < a.size(); ++i) hmax = std::max(hmax, a[i] - a[i - 1]);
  }
  mesh.h = hmax;
  if (dim == 2) {
    for (std::size_t j = 0; j + 1 < ny; ++j) {
      for (std::size_t i = 0; i + 1 < nx; ++i) {
        const int a = id(i, j, 0), b = id(i + 1, j, 0), c = id(i + 1, j + 1, 0), d = id(i, j + 1, 0);
        mesh.simplices.push_back({a, b, c, -1});
        mesh.simplices.push_back({a, c, d, -1});
      }
    }
  } else {
    // Kuhn subdivision: six tetrahedra along the main diagonal of every cell.
    static constexpr std::array<std::array<int, 3>, 6> kPaths{
        {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}}};
    for (std::size_t k = 0; k + 1 < nz; ++k) {
      for (std::size_t j = 0; j + 1 < ny; ++j) {
        for (std::size_t i = 0; i + 1 < nx; ++i) {
          for (const auto& path : kPaths) {
            std::array<std::size_t, 3> c{i, j, k};
            std::array<int, 4> tet{};
            tet[0] = id(c[0], c[1], c[2]);
            for (int s = 0; s < 3; ++s) {
              ++c[path[s]];
              tet[s + 1] = id(c[0], c[1], c[2]);
            }
            mesh.simplices.push_back(tet);
          }
        }
      }
    }
  }
  detail::orient_positive(mesh);
  std::function<int(const Facet&)> interior;
  if (interface_level) {
    const double level = *interface_level;
    const auto& normal = axes[dim - 1];
    const double tol = 1e-9 * (normal.back() - normal.front());
    interior = [&mesh, level, tol, dim](const Facet& f) {
      for (int i = 0; i < dim; ++i) {
        if (std::abs(mesh.vertices[f.v[i]][dim - 1] - level) > tol) return -1;
      }
      return kTagInterface;
    };
  }
  detail::build_facets(mesh, nullptr, interior);
  return mesh;
}

namespace {

/// Uniform nodes on [a, b] with spacing at most h.
std::vector<double> uniform_nodes(double a, double b, double h) {
  const auto n = std::max<long>(1, static_cast<long>(std::ceil((b - a) / h - 1e-9)));
  std::vector<double> out(static_cast<std::size_t>(n) + 1);
  for (long i = 0; i <= n; ++i) out[static_cast<std::size_t>(i)] = a + (b - a) * static_cast<double>(i) / n;
  out.back() = b;
  return out;
}

}  // namespace

Mesh mesh_interface(const Box& domain, double s0, double h) {
  if (!(h > 0.0)) throw Error(ErrorCode::invalid_argument, "mesh size must be positive");
  const int n = domain.dim - 1;
  if (!(s0 > domain.lo[n] && s0 < domain.hi[n])) {
    throw Error(ErrorCode::meshing_failure, "interface plane does not cross the box");
  }
  std::vector<std::vector<double>> axes;
  for (int i = 0; i < n; ++i) axes.push_back(uniform_nodes(domain.lo[i], domain.hi[i], h));
  auto below = uniform_nodes(domain.lo[n], s0, h);
  const auto above = uniform_nodes(s0, domain.hi[n], h);
  below.insert(below.end(), above.begin() + 1, above.end());
  axes.push_back(std::move(below));
  Mesh mesh = mesh_tensor(domain.dim, axes, s0);
  mesh.h = h;
  return mesh;
}

void write_mesh(const Mesh& mesh, std::ostream& os) {
  os << mesh.dim << ' ' << mesh.vertices.size() << ' ' << mesh.simplices.size() << ' ' << mesh.facets.size() << '\n';
  os << std::setprecision(17);
  for (const auto& v : mesh.vertices) {
    for (int i = 0; i < mesh.dim; ++i) os << (i ? " " : "") << v[i];
    os << '\n';
  }
  for (const auto& s : mesh.simplices) {
    for (int i = 0; i <= mesh.dim; ++i) os << (i ? " " : "") << s[i];
    os << '\n';
  }
  for (const auto& f : mesh.facets) {
    for (int i = 0; i < mesh.dim; ++i) os << f.v[i] << ' ';
    os << f.tag << '\n';
  }
  if (!os) throw Error(ErrorCode::io_failure, "failed to write mesh");
}

Mesh read_mesh(std::istream& is) {
  Mesh mesh;
  std::size_t nv = 0, ns = 0, nf = 0;
  if (!(is >> mesh.dim >> nv >> ns >> nf) || (mesh.dim != 2 && mesh.dim != 3)) {
    throw Error(ErrorCode::io_failure, "bad mesh header");
  }
  mesh.vertices.assign(nv, Vec3::Zero());
  for (auto& v : mesh.vertices) {
    for (int i = 0; i < mesh.dim; ++i) is >> v[i];
  }
  mesh.simplices.assign(ns, {-1, -1, -1, -1});
  for (auto& s : mesh.simplices) {
    for (int i = 0; i <= mesh.dim; ++i) is >> s[i];
  }
  mesh.facets.assign(nf, Facet{});
  for (auto& f : mesh.facets) {
    for (int i = 0; i < mesh.dim; ++i) is >> f.v[i];
    is >> f.tag;
  }
  if (!is) throw Error(ErrorCode::io_failure, "truncated mesh stream");
  const auto in_range = [nv](int v) { return v >= 0 && static_cast<std::size_t>(v) < nv; };
  for (const auto& s : mesh.simplices) {
    for (int i = 0; i <= mesh.dim; ++i) {
      if (!in_range(s[i])) throw Error(ErrorCode::inconsistent_mesh, "simplex vertex index out of range");
    }
  }
  for (const auto& f : mesh.facets) {
    for (int i = 0; i < mesh.dim; ++i) {
      if (!in_range(f.v[i])) throw Error(ErrorCode::inconsistent_mesh, "facet vertex index out of range");
    }
  }
  double hmax = 0.0;
  for (const auto& s : mesh.simplices) {
    for (int i = 0; i <= mesh.dim; ++i) {
      for (int j = i + 1; j <= mesh.dim; ++j) hmax = std::max(hmax, (mesh.vertices[s[i]] - mesh.vertices[s[j]]).norm());
    }
  }
  mesh.h = hmax;
  return mesh;
}

void write_mesh_file(const Mesh& mesh, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorCode::io_failure, "cannot open '" + path + "' for writing");
  write_mesh(mesh, os);
}

Mesh read_mesh_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorCode::io_failure, "cannot open '" + path + "'");
  return read_mesh(is);
}

PointLocator::PointLocator(const Mesh& mesh) : mesh_(&mesh) {
  const int d = mesh.dim;
  lo_ = Vec3::Zero();
  Vec3 hi = Vec3::Zero();
  if (!mesh.vertices.empty()) {
    lo_ = mesh.vertices.front();
    hi = lo_;
    for (const auto& v : mesh.vertices) {
      lo_ = lo_.cwiseMin(v);
      hi = hi.cwiseMax(v);
    }
  }
  const double count = std::max<double>(1.0, static_cast<double>(mesh.simplices.size()) / 2.0);
  const Vec3 span = (hi - lo_).cwiseMax(Vec3::Constant(1e-12));
  double vol = 1.0;
  for (int i = 0; i < d; ++i) vol *= span[i];
  const double cell = std::pow(vol / count, 1.0 / d);
  cell_ = Vec3::Ones();
  for (int i = 0; i < d; ++i) {
    n_[i] = std::clamp(static_cast<int>(std::ceil(span[i] / cell)), 1, 4096);
    cell_[i] = span[i] / n_[i];
  }
  buckets_.assign(static_cast<std::size_t>(n_[0]) * n_[1] * n_[2], {});
  for (std::size_t e = 0; e < mesh.simplices.size(); ++e) {
    Vec3 a = mesh.vertices[mesh.simplices[e][0]];
    Vec3 b = a;
    for (int i = 1; i <= d; ++i) {
      a = a.cwiseMin(mesh.vertices[mesh.simplices[e][i]]);
      b = b.cwiseMax(mesh.vertices[mesh.simplices[e][i]]);
    }
    std::array<int, 3> i0{0, 0, 0}, i1{0, 0, 0};
    for (int i = 0; i < d; ++i) {
      i0[i] = std::clamp(static_cast<int>(std::floor((a[i] - lo_[i]) / cell_[i])), 0, n_[i] - 1);
      i1[i] = std::clamp(static_cast<int>(std::floor((b[i] - lo_[i]) / cell_[i])), 0, n_[i] - 1);
    }
    for (int z = i0[2]; z <= i1[2]; ++z) {
      for (int y = i0[1]; y <= i1[1]; ++y) {
        for (int x = i0[0]; x <= i1[0]; ++x) {
          buckets_[static_cast<std::size_t>(x) + n_[0] * (static_cast<std::size_t>(y) + n_[1] * z)].push_back(
              static_cast<std::uint32_t>(e));
        }
      }
    }
  }
}

std::array<double, 4> PointLocator::barycentric(std::size_t e, const Vec3& x) const {
  const auto& m = *mesh_;
  const int d = m.dim;
  const auto& s = m.simplices[e];
  std::array<double, 4> bary{0, 0, 0, 0};
  if (d == 2) {
    const Vec3& a = m.vertices[s[0]];
    const Vec3& b = m.vertices[s[1]];
    const Vec3& c = m.vertices[s[2]];
    const double det = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
    bary[1] = ((x[0] - a[0]) * (c[1] - a[1]) - (x[1] - a[1]) * (c[0] - a[0])) / det;
    bary[2] = ((b[0] - a[0]) * (x[1] - a[1]) - (b[1] - a[1]) * (x[0] - a[0])) / det;
    bary[0] = 1.0 - bary[1] - bary[2];
    return bary;
  }
  Eigen::Matrix3d J;
  for (int i = 0; i < 3; ++i) J.col(i) = m.vertices[s[i + 1]] - m.vertices[s[0]];
  const Vec3 l = J.partialPivLu().solve(x - m.vertices[s[0]]);
  bary = {1.0 - l.sum(), l[0], l[1], l[2]};
  return bary;
}

std::optional<PointLocator::Hit> PointLocator::locate(const Vec3& x, double tol) const {
  const int d = mesh_->dim;
  std::array<int, 3> idx{0, 0, 0};
  for (int i = 0; i < d; ++i) {
    const double t = (x[i] - lo_[i]) / cell_[i];
    if (t < -1e-9 * n_[i] || t > n_[i] * (1.0 + 1e-9)) return std::nullopt;
    idx[i] = std::clamp(static_cast<int>(std::floor(t)), 0, n_[i] - 1);
  }
  const auto& bucket =
      buckets_[static_cast<std::size_t>(idx[0]) + n_[0] * (static_cast<std::size_t>(idx[1]) + n_[1] * idx[2])];
  std::optional<Hit> best;
  double best_min = -std::numeric_limits<double>::infinity();
  for (std::uint32_t e : bucket) {
    const auto bary = barycentric(e, x);
    double mn = bary[0];
    for (int i = 1; i <= d; ++i) mn = std::min(mn, bary[i]);
    if (mn > best_min) {
      best_min = mn;
      best = Hit{e, bary};
    }
  }
  if (!best || best_min < -tol) return std::nullopt;
  return best;
}

}  // namespace perfhom
