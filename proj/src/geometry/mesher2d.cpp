#include "delaunay2d.hpp"
#include "mesh_internal.hpp"
#include "sizing.hpp"

#include "perfhom/error.hpp"
#include "perfhom/mesh.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <unordered_map>
#include <unordered_set>

namespace perfhom::detail {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Piece of a constraint curve between two vertices. For cavities the
/// parameter is the polar angle, for S it is the x1 coordinate.
struct Segment {
  int a;
  int b;
  double ta;
  double tb;
  /// Cavity index for cavity boundaries, -1 for S.
  int cavity;
  /// For S pieces: index of the cavity the piece runs through, or -1.
  int inside;
};

std::uint64_t edge_key(int a, int b) {
  if (a > b) std::swap(a, b);
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) | static_cast<std::uint32_t>(b);
}

class Mesher2D {
 public:
  Mesher2D(const PerforationLayout& layout, const MeshOptions& options)
      : L_(layout), opt_(options), size_(layout, options), rng_(options.seed) {}

  MeshPair run();

 private:
  const PerforationLayout& L_;
  const MeshOptions& opt_;
  SizeField size_;
  std::mt19937_64 rng_;

  std::vector<Vec3> pts_;
  /// -1: free; k >= 0: strictly inside cavity k.
  std::vector<int> owner_;
  std::vector<Segment> segs_;

  Vec3 cavity_point(std::size_t k, double theta) const {
    return L_.centers[k] + L_.cavity_scale() * L_.shapes[k].boundary_point(theta);
  }
  int add_point(const Vec3& p, int owner) {
    pts_.push_back(p);
    owner_.push_back(owner);
    return static_cast<int>(pts_.size()) - 1;
  }
  std::vector<double> s_crossings(std::size_t k) const;
  void boundary_points();
  void interior_points();
};

std::vector<double> Mesher2D::s_crossings(std::size_t k) const {
  auto g = [&](double t) { return cavity_point(k, t)[1] - L_.s0; };
  std::vector<double> roots;
  constexpr int kScan = 720;
  double t_prev = 0.0;
  double g_prev = g(t_prev);
  for (int i = 1; i <= kScan; ++i) {
    const double t = kTwoPi * i / kScan;
    const double gt = g(t);
    if (g_prev == 0.0) {
      roots.push_back(t_prev);
    } else if ((g_prev < 0.0) != (gt < 0.0) && gt != 0.0) {
      double lo = t_prev, hi = t, glo = g_prev;
      for (int it = 0; it < 80; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double gm = g(mid);
        if ((gm < 0.0) == (glo < 0.0)) {
          lo = mid;
          glo = gm;
        } else {
          hi = mid;
        }
      }
      roots.push_back(0.5 * (lo + hi));
    }
    t_prev = t;
    g_prev = gt;
  }
  return roots;
}

void Mesher2D::boundary_points() {
  const Box& box = L_.domain;
  const double s0 = L_.s0;
  auto h = [this](const Vec3& x) { return size_(x); };

  // Box corners come first so that vertex ids match the Delaunay kernel.
  add_point(Vec3(box.lo[0], box.lo[1], 0), -1);
  add_point(Vec3(box.hi[0], box.lo[1], 0), -1);
  add_point(Vec3(box.hi[0], box.hi[1], 0), -1);
  add_point(Vec3(box.lo[0], box.hi[1], 0), -1);

  // Cavity polygons, split at their crossings with S.
  struct Crossing {
    double x;
    int vertex;
  };
  std::vector<Crossing> crossings;
  for (std::size_t k = 0; k < L_.size(); ++k) {
    std::vector<double> breaks = s_crossings(k);
    const bool crosses = breaks.size() >= 2;
    if (!crosses) breaks = {0.0};
    std::sort(breaks.begin(), breaks.end());
    const double hc = size_.cavity_h(k);
    const double perimeter = L_.physical_boundary_measure(k);
    const int total = std::max(opt_.min_cavity_segments, static_cast<int>(std::ceil(perimeter / hc - 1e-9)));
    std::vector<int> break_vertex;
    for (double t : breaks) {
      const int v = add_point(cavity_point(k, t), -1);
      break_vertex.push_back(v);
      if (crosses) crossings.push_back({pts_[v][0], v});
    }
    for (std::size_t i = 0; i < breaks.size(); ++i) {
      const double t0 = breaks[i];
      const double t1 = i + 1 < breaks.size() ? breaks[i + 1] : breaks[0] + kTwoPi;
      auto curve = [&](double t) { return cavity_point(k, t); };
      // Arc share of the segment budget, by arc length.
      double arc = 0.0;
      Vec3 prev = curve(t0);
      for (int s = 1; s <= 256; ++s) {
        const Vec3 p = curve(t0 + (t1 - t0) * s / 256);
        arc += (p - prev).norm();
        prev = p;
      }
      const int nseg = std::max(2, static_cast<int>(std::lround(total * arc / perimeter)));
      const double target = arc / nseg;
      auto params = equidistribute(curve, t0, t1, [target](const Vec3&) { return target; }, nseg);
      int prev_v = break_vertex[i];
      for (std::size_t j = 1; j < params.size(); ++j) {
        const bool last = j + 1 == params.size();
        const int v = last ? break_vertex[(i + 1) % breaks.size()] : add_point(cavity_point(k, params[j]), -1);
        segs_.push_back({prev_v, v, params[j - 1], params[j], static_cast<int>(k), -1});
        prev_v = v;
      }
    }
  }

  // S, split at the cavity crossings; interior pieces are marked with their cavity.
  std::sort(crossings.begin(), crossings.end(), [](const Crossing& a, const Crossing& b) { return a.x < b.x; });
  const int s_left = add_point(Vec3(box.lo[0], s0, 0), -1);
  const int s_right = add_point(Vec3(box.hi[0], s0, 0), -1);
  std::vector<Crossing> stops{{box.lo[0], s_left}};
  stops.insert(stops.end(), crossings.begin(), crossings.end());
  stops.push_back({box.hi[0], s_right});
  for (std::size_t i = 0; i + 1 < stops.size(); ++i) {
    const double x0 = stops[i].x;
    const double x1 = stops[i + 1].x;
    if (!(x1 > x0)) throw Error(ErrorCode::meshing_failure, "cavity crossings with S overlap");
    const int inside = L_.cavity_containing(Vec3(0.5 * (x0 + x1), s0, 0));
    auto line = [s0](double t) { return Vec3(t, s0, 0); };
    const auto params = equidistribute(line, x0, x1, h, 1);
    int prev_v = stops[i].vertex;
    for (std::size_t j = 1; j < params.size(); ++j) {
      const bool last = j + 1 == params.size();
      const int v = last ? stops[i + 1].vertex : add_point(line(params[j]), inside);
      segs_.push_back({prev_v, v, params[j - 1], params[j], -1, inside});
      prev_v = v;
    }
  }

  // Box sides (the vertical sides are split at S).
  auto side = [&](Vec3 p, Vec3 q) {
    auto line = [p, q](double t) { return Vec3(p + t * (q - p)); };
    const auto params = equidistribute(line, 0.0, 1.0, h, 1);
    for (std::size_t j = 1; j + 1 < params.size(); ++j) add_point(line(params[j]), -1);
  };
  side(pts_[0], pts_[1]);
  side(pts_[3], pts_[2]);
  side(pts_[0], pts_[s_left]);
  side(pts_[s_left], pts_[3]);
  side(pts_[1], pts_[s_right]);
  side(pts_[s_right], pts_[2]);
}

void Mesher2D::interior_points() {
  const Box& box = L_.domain;
  const double s0 = L_.s0;
  auto accept = [&](const Vec3& p, double hp) {
    const double keep = 0.6 * hp;
    if (box.distance_to_boundary(p) < keep || std::abs(p[1] - s0) < keep) return false;
    double d = 0.0;
    const int k = size_.nearest_cavity(p, &d);
    if (k >= 0 && std::abs(d) < keep) return false;
    return true;
  };
  const auto pts = tree_points(box.lo, box.hi, {0, 1}, size_, rng_, accept);
  for (const auto& p : pts) add_point(p, L_.cavity_containing(p));

  // Cavities without an interior vertex get their centre (or a point off S).
  std::vector<char> seeded(L_.size(), 0);
  for (int o : owner_) {
    if (o >= 0) seeded[static_cast<std::size_t>(o)] = 1;
  }
  for (std::size_t k = 0; k < L_.size(); ++k) {
    if (seeded[k]) continue;
    Vec3 c = L_.centers[k] + L_.cavity_scale() * L_.shapes[k].offset;
    if (std::abs(c[1] - s0) < 0.25 * size_.cavity_h(k)) {
      c[1] = s0 + 0.5 * L_.cavity_scale() * L_.shapes[k].inscribed_radius();
    }
    if (L_.cavity_containing(c) != static_cast<int>(k)) {
      throw Error(ErrorCode::meshing_failure, "cannot seed the interior of cavity " + std::to_string(k));
    }
    add_point(c, static_cast<int>(k));
  }
}

MeshPair Mesher2D::run() {
  boundary_points();
  interior_points();

  const Box& box = L_.domain;
  Delaunay2D dt(Vec2(box.lo[0], box.lo[1]), Vec2(box.hi[0], box.hi[1]));
  // Kernel vertex ids equal point ids: the corners are points 0..3.
  std::vector<Vec3> tail(pts_.begin() + 4, pts_.end());
  const auto order = spatial_order(tail, 2);
  std::vector<int> kernel_of(pts_.size());
  for (int i = 0; i < 4; ++i) kernel_of[static_cast<std::size_t>(i)] = i;
  std::vector<int> point_of{0, 1, 2, 3};
  for (std::size_t i : order) {
    const Vec3& p = tail[i];
    const int kv = dt.insert(Vec2(p[0], p[1]));
    kernel_of[i + 4] = kv;
    point_of.push_back(static_cast<int>(i + 4));
  }
  for (auto& s : segs_) {
    s.a = kernel_of[static_cast<std::size_t>(s.a)];
    s.b = kernel_of[static_cast<std::size_t>(s.b)];
  }
  std::vector<int> owner(point_of.size());
  for (std::size_t v = 0; v < point_of.size(); ++v) owner[v] = owner_[static_cast<std::size_t>(point_of[v])];

  // Constraint recovery by splitting missing segments at their curve midpoints.
  int rounds = 0;
  for (;; ++rounds) {
    if (rounds > 40) throw Error(ErrorCode::meshing_failure, "constraint recovery did not converge");
    std::unordered_set<std::uint64_t> edges;
    for (const auto& t : dt.compact()) {
      for (int i = 0; i < 3; ++i) edges.insert(edge_key(t.v[i], t.v[(i + 1) % 3]));
    }
    std::vector<Segment> next;
    next.reserve(segs_.size());
    bool missing = false;
    for (const auto& s : segs_) {
      if (edges.count(edge_key(s.a, s.b))) {
        next.push_back(s);
        continue;
      }
      missing = true;
      const double tm = 0.5 * (s.ta + s.tb);
      const Vec3 pm = s.cavity >= 0 ? cavity_point(static_cast<std::size_t>(s.cavity), tm) : Vec3(tm, L_.s0, 0);
      const int vm = dt.insert(Vec2(pm[0], pm[1]));
      owner.push_back(s.cavity >= 0 ? -1 : s.inside);
      next.push_back({s.a, vm, s.ta, tm, s.cavity, s.inside});
      next.push_back({vm, s.b, tm, s.tb, s.cavity, s.inside});
    }
    segs_ = std::move(next);
    if (!missing) break;
  }
  if (rounds > 0) spdlog::debug("mesher2d: constraint recovery took {} rounds", rounds);

  // Carve: flood fill each cavity from its interior vertices without crossing its boundary.
  const auto tris = dt.compact();
  const auto& kp = dt.points();
  std::unordered_map<std::uint64_t, int> cavity_edge;
  std::unordered_set<std::uint64_t> s_edge;
  std::unordered_map<std::uint64_t, int> s_edge_inside;
  for (const auto& s : segs_) {
    if (s.cavity >= 0) {
      cavity_edge[edge_key(s.a, s.b)] = s.cavity;
    } else {
      s_edge.insert(edge_key(s.a, s.b));
      s_edge_inside[edge_key(s.a, s.b)] = s.inside;
    }
  }
  std::vector<int> label(tris.size(), -1);
  std::vector<std::vector<int>> seeds(L_.size());
  for (std::size_t t = 0; t < tris.size(); ++t) {
    for (int v : tris[t].v) {
      const int o = owner[static_cast<std::size_t>(v)];
      if (o >= 0) seeds[static_cast<std::size_t>(o)].push_back(static_cast<int>(t));
    }
  }
  for (std::size_t k = 0; k < L_.size(); ++k) {
    if (seeds[k].empty()) throw Error(ErrorCode::meshing_failure, "cavity " + std::to_string(k) + " has no seed");
    std::vector<int> queue;
    for (int t : seeds[k]) {
      if (label[static_cast<std::size_t>(t)] == -1) {
        label[static_cast<std::size_t>(t)] = static_cast<int>(k);
        queue.push_back(t);
      }
    }
    for (std::size_t q = 0; q < queue.size(); ++q) {
      const auto& t = tris[static_cast<std::size_t>(queue[q])];
      for (int i = 0; i < 3; ++i) {
        const auto key = edge_key(t.v[(i + 1) % 3], t.v[(i + 2) % 3]);
        const auto it = cavity_edge.find(key);
        if (it != cavity_edge.end() && it->second == static_cast<int>(k)) continue;
        if (t.n[i] < 0) throw Error(ErrorCode::meshing_failure, "cavity fill leaked to the outer boundary");
        const int nb = t.n[i];
        if (label[static_cast<std::size_t>(nb)] == static_cast<int>(k)) continue;
        if (label[static_cast<std::size_t>(nb)] != -1) throw Error(ErrorCode::meshing_failure, "cavities overlap");
        label[static_cast<std::size_t>(nb)] = static_cast<int>(k);
        queue.push_back(nb);
      }
    }
  }

  // Vertex numbering: vertices of kept triangles first.
  const std::size_t nv = kp.size();
  std::vector<char> kept_vertex(nv, 0);
  for (std::size_t t = 0; t < tris.size(); ++t) {
    if (label[t] >= 0) continue;
    for (int v : tris[t].v) kept_vertex[static_cast<std::size_t>(v)] = 1;
  }
  std::vector<int> new_id(nv, -1);
  int next_id = 0;
  for (std::size_t v = 0; v < nv; ++v) {
    if (kept_vertex[v]) new_id[v] = next_id++;
  }
  const int n_kept = next_id;
  for (std::size_t v = 0; v < nv; ++v) {
    if (new_id[v] < 0) new_id[v] = next_id++;
  }

  MeshPair pair;
  pair.nested = true;
  Mesh& comp = pair.companion;
  Mesh& perf = pair.perforated;
  comp.dim = perf.dim = 2;
  comp.h = perf.h = opt_.h;
  comp.vertices.resize(nv);
  for (std::size_t v = 0; v < nv; ++v) {
    comp.vertices[static_cast<std::size_t>(new_id[v])] = Vec3(kp[v][0], kp[v][1], 0.0);
  }
  perf.vertices.assign(comp.vertices.begin(), comp.vertices.begin() + n_kept);
  for (int pass = 0; pass < 2; ++pass) {
    for (std::size_t t = 0; t < tris.size(); ++t) {
      if ((label[t] >= 0) != (pass == 1)) continue;
      const auto& v = tris[t].v;
      const std::array<int, 4> s{new_id[static_cast<std::size_t>(v[0])], new_id[static_cast<std::size_t>(v[1])],
                                 new_id[static_cast<std::size_t>(v[2])], -1};
      comp.simplices.push_back(s);
      if (pass == 0) perf.simplices.push_back(s);
    }
  }

  for (std::size_t t = 0; t < tris.size(); ++t) {
    for (int i = 0; i < 3; ++i) {
      const int a = tris[t].v[(i + 1) % 3];
      const int b = tris[t].v[(i + 2) % 3];
      const int nb = tris[t].n[i];
      if (nb >= 0 && nb < static_cast<int>(t)) continue;  // each interior edge once
      Facet f;
      f.v = {new_id[static_cast<std::size_t>(a)], new_id[static_cast<std::size_t>(b)], -1};
      const auto key = edge_key(a, b);
      if (nb < 0) {
        f.tag = kTagOuter;
        comp.facets.push_back(f);
        perf.facets.push_back(f);
        continue;
      }
      const int la = label[t];
      const int lb = label[static_cast<std::size_t>(nb)];
      if (s_edge.count(key)) {
        f.tag = kTagInterface;
        comp.facets.push_back(f);
        if (la < 0 && lb < 0) perf.facets.push_back(f);
      }
      if ((la < 0) != (lb < 0)) {
        f.tag = kTagCavityBase + std::max(la, lb);
        perf.facets.push_back(f);
      }
    }
  }

  // Each cavity must be bounded by exactly its polygon.
  std::vector<int> polygon(L_.size(), 0);
  for (const auto& s : segs_) {
    if (s.cavity >= 0) ++polygon[static_cast<std::size_t>(s.cavity)];
  }
  std::vector<int> bounded(L_.size(), 0);
  for (const auto& f : perf.facets) {
    if (is_cavity_tag(f.tag)) ++bounded[static_cast<std::size_t>(f.tag - kTagCavityBase)];
  }
  if (polygon != bounded) throw Error(ErrorCode::meshing_failure, "carved region does not match the cavity polygons");

  for (std::size_t e = 0; e < comp.simplices.size(); ++e) {
    if (!(comp.simplex_volume(e) > 0.0)) throw Error(ErrorCode::meshing_failure, "degenerate triangle produced");
  }
  return pair;
}

}  // namespace

MeshPair mesh_2d(const PerforationLayout& layout, const MeshOptions& options) {
  return Mesher2D(layout, options).run();
}

}  // namespace perfhom::detail
