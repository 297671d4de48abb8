#include "delaunay3d.hpp"

#include "perfhom/error.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <map>

namespace perfhom::detail {

namespace {

double insphere_raw(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d, const Vec3& e) {
  Eigen::Matrix4d m;
  const std::array<const Vec3*, 4> rows{&a, &b, &c, &d};
  for (int i = 0; i < 4; ++i) {
    const Vec3 r = *rows[i] - e;
    m.row(i) << r[0], r[1], r[2], r.squaredNorm();
  }
  return m.determinant();
}

}  // namespace

double orient3d(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d) {
  const Vec3 u = b - a;
  const Vec3 v = c - a;
  const Vec3 w = d - a;
  return u[0] * (v[1] * w[2] - v[2] * w[1]) - u[1] * (v[0] * w[2] - v[2] * w[0]) + u[2] * (v[0] * w[1] - v[1] * w[0]);
}

Delaunay3D::Delaunay3D(const Vec3& lo, const Vec3& hi) {
  for (int k = 0; k < 8; ++k) {
    pts_.emplace_back((k & 1) ? hi[0] : lo[0], (k & 2) ? hi[1] : lo[1], (k & 4) ? hi[2] : lo[2]);
  }
  // Sign convention of the lifted determinant, fixed on a reference tetrahedron.
  const Vec3 a(0, 0, 0), b(1, 0, 0), c(0, 1, 0), d(0, 0, 1);
  const Vec3 inside(0.25, 0.25, 0.25);
  insphere_sign_ = (insphere_raw(a, b, c, d, inside) * orient3d(a, b, c, d) > 0.0) ? 1.0 : -1.0;

  // Kuhn subdivision of the box into six tetrahedra along the 0-7 diagonal.
  static constexpr std::array<std::array<int, 3>, 6> kPaths{
      {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}}};
  for (const auto& path : kPaths) {
    Tet t;
    int code = 0;
    t.v[0] = 0;
    for (int s = 0; s < 3; ++s) {
      code |= 1 << path[s];
      t.v[s + 1] = code;
    }
    if (orient3d(pts_[t.v[0]], pts_[t.v[1]], pts_[t.v[2]], pts_[t.v[3]]) < 0.0) std::swap(t.v[0], t.v[1]);
    tets_.push_back(t);
    stamp_.push_back(0);
  }
  std::map<std::array<int, 3>, std::pair<int, int>> faces;
  for (int t = 0; t < static_cast<int>(tets_.size()); ++t) {
    for (int i = 0; i < 4; ++i) {
      std::array<int, 3> key{};
      int c = 0;
      for (int j = 0; j < 4; ++j) {
        if (j != i) key[c++] = tets_[t].v[j];
      }
      std::sort(key.begin(), key.end());
      auto it = faces.find(key);
      if (it == faces.end()) {
        faces[key] = {t, i};
      } else {
        tets_[t].n[i] = it->second.first;
        tets_[it->second.first].n[it->second.second] = t;
      }
    }
  }
}

double Delaunay3D::orient_replaced(const Tet& t, int i, const Vec3& p) const {
  std::array<const Vec3*, 4> q{&pts_[t.v[0]], &pts_[t.v[1]], &pts_[t.v[2]], &pts_[t.v[3]]};
  q[i] = &p;
  return orient3d(*q[0], *q[1], *q[2], *q[3]);
}

bool Delaunay3D::in_sphere(const Tet& t, const Vec3& p) const {
  const Vec3& a = pts_[t.v[0]];
  const Vec3& b = pts_[t.v[1]];
  const Vec3& c = pts_[t.v[2]];
  const Vec3& d = pts_[t.v[3]];
  return insphere_sign_ * insphere_raw(a, b, c, d, p) > 0.0;
}

int Delaunay3D::new_tet(const Tet& t) {
  if (!free_.empty()) {
    const int id = free_.back();
    free_.pop_back();
    tets_[id] = t;
    stamp_[id] = 0;
    return id;
  }
  tets_.push_back(t);
  stamp_.push_back(0);
  return static_cast<int>(tets_.size()) - 1;
}

int Delaunay3D::locate(const Vec3& p) {
  int t = last_;
  if (t < 0 || t >= static_cast<int>(tets_.size()) || !tets_[t].alive) {
    t = 0;
    while (!tets_[t].alive) ++t;
  }
  const std::size_t cap = 4 * tets_.size() + 100;
  for (std::size_t step = 0; step < cap; ++step) {
    const Tet& tet = tets_[t];
    walk_rng_ ^= walk_rng_ << 13;
    walk_rng_ ^= walk_rng_ >> 17;
    walk_rng_ ^= walk_rng_ << 5;
    const int start = static_cast<int>(walk_rng_ % 4);
    int next = -1;
    for (int k = 0; k < 4; ++k) {
      const int i = (start + k) % 4;
      if (tet.n[i] >= 0 && orient_replaced(tet, i, p) < 0.0) {
        next = tet.n[i];
        break;
      }
    }
    if (next < 0) return t;
    t = next;
  }
  throw Error(ErrorCode::meshing_failure, "3D point location did not terminate");
}

int Delaunay3D::insert(const Vec3& p) {
  const int t0 = locate(p);
  const int pid = static_cast<int>(pts_.size());
  pts_.push_back(p);

  ++epoch_;
  if (epoch_ == 0) {
    std::fill(stamp_.begin(), stamp_.end(), 0U);
    epoch_ = 1;
  }
  std::vector<int> cavity{t0};
  stamp_[t0] = epoch_;
  for (std::size_t q = 0; q < cavity.size(); ++q) {
    const Tet& t = tets_[cavity[q]];
    for (int i = 0; i < 4; ++i) {
      const int nb = t.n[i];
      if (nb < 0 || stamp_[nb] == epoch_) continue;
      if (in_sphere(tets_[nb], p)) {
        stamp_[nb] = epoch_;
        cavity.push_back(nb);
      }
    }
  }

  struct Face {
    int tet;
    int i;
  };
  std::vector<Face> boundary;
  for (int guard = 0;; ++guard) {
    if (guard > 5000) throw Error(ErrorCode::meshing_failure, "3D Delaunay cavity repair failed");
    boundary.clear();
    std::sort(cavity.begin(), cavity.end());
    cavity.erase(std::unique(cavity.begin(), cavity.end()), cavity.end());
    bool repaired = false;
    for (int c : cavity) {
      if (stamp_[c] != epoch_) continue;
      const Tet& t = tets_[c];
      for (int i = 0; i < 4 && !repaired; ++i) {
        const int nb = t.n[i];
        if (nb >= 0 && stamp_[nb] == epoch_) continue;
        const double o = orient_replaced(t, i, p);
        if (nb < 0 && o == 0.0) continue;  // p on a hull face
        const Vec3& a = pts_[t.v[(i + 1) % 4]];
        const double l = std::max((pts_[t.v[(i + 2) % 4]] - a).norm(), (pts_[t.v[(i + 3) % 4]] - a).norm());
        const double scale = l * l * l;
        if (o > 1e-12 * scale) {
          boundary.push_back({c, i});
          continue;
        }
        if (nb >= 0 && std::abs(o) <= 1e-12 * scale) {
          stamp_[nb] = epoch_;
          cavity.push_back(nb);
        } else if (c != t0) {
          stamp_[c] = 0;
        } else {
          throw Error(ErrorCode::meshing_failure, "point outside the tetrahedralized box");
        }
        repaired = true;
      }
      if (repaired) break;
    }
    if (!repaired) break;
  }

  std::vector<Tet> fan;
  fan.reserve(boundary.size());
  for (const Face& f : boundary) {
    Tet nt;
    nt.v = tets_[f.tet].v;
    nt.v[f.i] = pid;
    nt.n = {-1, -1, -1, -1};
    nt.n[f.i] = tets_[f.tet].n[f.i];
    fan.push_back(nt);
  }
  for (int c : cavity) {
    if (stamp_[c] == epoch_ && tets_[c].alive) {
      tets_[c].alive = false;
      free_.push_back(c);
    }
  }
  struct Spoke {
    int a;
    int b;
    int tet;
    int i;
  };
  std::vector<Spoke> spokes;
  spokes.reserve(3 * fan.size());
  int first = -1;
  for (std::size_t k = 0; k < fan.size(); ++k) {
    const int i = boundary[k].i;
    const int id = new_tet(fan[k]);
    if (first < 0) first = id;
    const int nb = fan[k].n[i];
    if (nb >= 0) {
      // The neighbour's face index is that of its vertex not on the shared face.
      Tet& u = tets_[nb];
      for (int j = 0; j < 4; ++j) {
        const int w = u.v[j];
        bool on_face = false;
        for (int m = 0; m < 4; ++m) on_face = on_face || (m != i && fan[k].v[m] == w);
        if (!on_face) {
          u.n[j] = id;
          break;
        }
      }
    }
    for (int j = 0; j < 4; ++j) {
      if (j == i) continue;
      std::array<int, 2> e{};
      int c = 0;
      for (int m = 0; m < 4; ++m) {
        if (m != i && m != j) e[c++] = fan[k].v[m];
      }
      if (e[0] > e[1]) std::swap(e[0], e[1]);
      spokes.push_back({e[0], e[1], id, j});
    }
  }
  std::sort(spokes.begin(), spokes.end(),
            [](const Spoke& x, const Spoke& y) { return x.a != y.a ? x.a < y.a : x.b < y.b; });
  for (std::size_t k = 0; k + 1 < spokes.size(); ++k) {
    if (spokes[k].a != spokes[k + 1].a || spokes[k].b != spokes[k + 1].b) continue;
    tets_[spokes[k].tet].n[spokes[k].i] = spokes[k + 1].tet;
    tets_[spokes[k + 1].tet].n[spokes[k + 1].i] = spokes[k].tet;
    ++k;
  }
  if (first >= 0) last_ = first;
  return pid;
}

std::vector<Delaunay3D::Tet> Delaunay3D::compact() const {
  std::vector<int> remap(tets_.size(), -1);
  std::vector<Tet> out;
  for (std::size_t t = 0; t < tets_.size(); ++t) {
    if (!tets_[t].alive) continue;
    remap[t] = static_cast<int>(out.size());
    out.push_back(tets_[t]);
  }
  for (auto& t : out) {
    for (int& n : t.n) n = n >= 0 ? remap[n] : -1;
  }
  return out;
}

}  // namespace perfhom::detail
