#include "delaunay2d.hpp"

#include "perfhom/error.hpp"

#include <algorithm>
#include <cmath>

namespace perfhom::detail {

double orient2d(const Vec2& a, const Vec2& b, const Vec2& c) {
  return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
}

double incircle(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d) {
  const double adx = a[0] - d[0], ady = a[1] - d[1];
  const double bdx = b[0] - d[0], bdy = b[1] - d[1];
  const double cdx = c[0] - d[0], cdy = c[1] - d[1];
  const double alift = adx * adx + ady * ady;
  const double blift = bdx * bdx + bdy * bdy;
  const double clift = cdx * cdx + cdy * cdy;
  return alift * (bdx * cdy - bdy * cdx) + blift * (cdx * ady - cdy * adx) + clift * (adx * bdy - ady * bdx);
}

Delaunay2D::Delaunay2D(const Vec2& lo, const Vec2& hi) {
  pts_ = {lo, Vec2(hi[0], lo[1]), hi, Vec2(lo[0], hi[1])};
  Tri a;
  a.v = {0, 1, 2};
  a.n = {-1, 1, -1};
  Tri b;
  b.v = {0, 2, 3};
  b.n = {-1, -1, 0};
  tris_ = {a, b};
  stamp_ = {0, 0};
}

int Delaunay2D::new_tri(const Tri& t) {
  if (!free_.empty()) {
    const int id = free_.back();
    free_.pop_back();
    tris_[id] = t;
    stamp_[id] = 0;
    return id;
  }
  tris_.push_back(t);
  stamp_.push_back(0);
  return static_cast<int>(tris_.size()) - 1;
}

int Delaunay2D::locate(const Vec2& p) {
  int t = last_;
  if (t < 0 || t >= static_cast<int>(tris_.size()) || !tris_[t].alive) {
    t = 0;
    while (!tris_[t].alive) ++t;
  }
  const std::size_t cap = 4 * tris_.size() + 100;
  for (std::size_t step = 0; step < cap; ++step) {
    const Tri& tri = tris_[t];
    walk_rng_ = walk_rng_ * 1103515245U + 12345U;
    const int start = static_cast<int>((walk_rng_ >> 16) % 3);
    int next = -1;
    for (int k = 0; k < 3; ++k) {
      const int i = (start + k) % 3;
      const Vec2& a = pts_[tri.v[(i + 1) % 3]];
      const Vec2& b = pts_[tri.v[(i + 2) % 3]];
      if (orient2d(a, b, p) < 0.0 && tri.n[i] >= 0) {
        next = tri.n[i];
        break;
      }
    }
    if (next < 0) return t;
    t = next;
  }
  throw Error(ErrorCode::meshing_failure, "point location did not terminate");
}

int Delaunay2D::insert(const Vec2& p) {
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
    const Tri& t = tris_[cavity[q]];
    for (int i = 0; i < 3; ++i) {
      const int nb = t.n[i];
      if (nb < 0 || stamp_[nb] == epoch_) continue;
      const Tri& u = tris_[nb];
      if (incircle(pts_[u.v[0]], pts_[u.v[1]], pts_[u.v[2]], p) > 0.0) {
        stamp_[nb] = epoch_;
        cavity.push_back(nb);
      }
    }
  }

  // Repair the cavity until every boundary edge sees p strictly on its left.
  struct Edge {
    int tri;
    int i;
  };
  std::vector<Edge> boundary;
  for (int guard = 0;; ++guard) {
    if (guard > 1000) throw Error(ErrorCode::meshing_failure, "Delaunay cavity repair failed");
    boundary.clear();
    std::sort(cavity.begin(), cavity.end());
    cavity.erase(std::unique(cavity.begin(), cavity.end()), cavity.end());
    bool repaired = false;
    for (int c : cavity) {
      if (stamp_[c] != epoch_) continue;
      const Tri& t = tris_[c];
      for (int i = 0; i < 3 && !repaired; ++i) {
        const int nb = t.n[i];
        if (nb >= 0 && stamp_[nb] == epoch_) continue;
        const Vec2& a = pts_[t.v[(i + 1) % 3]];
        const Vec2& b = pts_[t.v[(i + 2) % 3]];
        const double o = orient2d(a, b, p);
        if (nb < 0 && o == 0.0) continue;  // p on a hull edge: the edge is split.
        const double scale = (b - a).squaredNorm();
        if (o > 1e-13 * scale) {
          boundary.push_back({c, i});
          continue;
        }
        if (nb >= 0 && std::abs(o) <= 1e-13 * scale) {
          stamp_[nb] = epoch_;
          cavity.push_back(nb);
        } else if (c != t0) {
          stamp_[c] = 0;
        } else {
          throw Error(ErrorCode::meshing_failure, "point outside the triangulated region");
        }
        repaired = true;
      }
      if (repaired) break;
    }
    if (!repaired) break;
  }

  std::vector<std::pair<int, std::pair<int, int>>> spokes;  // vertex -> (tri, local edge)
  std::vector<int> created(boundary.size(), -1);
  // Read the fan off the cavity before its slots are recycled.
  std::vector<Tri> fan;
  fan.reserve(boundary.size());
  for (const Edge& e : boundary) {
    Tri nt;
    nt.v = tris_[e.tri].v;
    nt.v[e.i] = pid;
    nt.n = {-1, -1, -1};
    nt.n[e.i] = tris_[e.tri].n[e.i];
    fan.push_back(nt);
  }
  std::vector<int> outer_side(boundary.size());
  for (std::size_t k = 0; k < boundary.size(); ++k) outer_side[k] = boundary[k].i;
  for (int c : cavity) {
    if (stamp_[c] == epoch_ && tris_[c].alive) {
      tris_[c].alive = false;
      free_.push_back(c);
    }
  }
  for (std::size_t k = 0; k < fan.size(); ++k) {
    const int id = new_tri(fan[k]);
    created[k] = id;
    const int i = outer_side[k];
    const int nb = fan[k].n[i];
    if (nb >= 0) {
      Tri& u = tris_[nb];
      const int a = fan[k].v[(i + 1) % 3];
      const int b = fan[k].v[(i + 2) % 3];
      for (int j = 0; j < 3; ++j) {
        const int ua = u.v[(j + 1) % 3];
        const int ub = u.v[(j + 2) % 3];
        if (ua == b && ub == a) {
          u.n[j] = id;
          break;
        }
      }
    }
    // Edges through p: (p, v[i+1]) is opposite v[i+2]; (v[i+2], p) is opposite v[i+1].
    spokes.push_back({fan[k].v[(i + 1) % 3], {id, (i + 2) % 3}});
    spokes.push_back({fan[k].v[(i + 2) % 3], {id, (i + 1) % 3}});
  }
  std::sort(spokes.begin(), spokes.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  for (std::size_t k = 0; k + 1 < spokes.size(); ++k) {
    if (spokes[k].first != spokes[k + 1].first) continue;
    const auto [ta, ia] = spokes[k].second;
    const auto [tb, ib] = spokes[k + 1].second;
    tris_[ta].n[ia] = tb;
    tris_[tb].n[ib] = ta;
    ++k;
  }
  last_ = created.empty() ? last_ : created.front();
  return pid;
}

std::vector<Delaunay2D::Tri> Delaunay2D::compact() const {
  std::vector<int> remap(tris_.size(), -1);
  std::vector<Tri> out;
  for (std::size_t t = 0; t < tris_.size(); ++t) {
    if (!tris_[t].alive) continue;
    remap[t] = static_cast<int>(out.size());
    out.push_back(tris_[t]);
  }
  for (auto& t : out) {
    for (int& n : t.n) n = n >= 0 ? remap[n] : -1;
  }
  return out;
}

}  // namespace perfhom::detail
