#include "sizing.hpp"

#include "perfhom/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace perfhom::detail {

SizeField::SizeField(const PerforationLayout& layout, const MeshOptions& options)
    : layout_(&layout),
      h_far_(options.h),
      band_h_(options.band_h > 0.0 ? std::min(options.band_h, options.h) : options.h),
      g_(options.grading) {
  if (!(options.h > 0.0) || !(options.refine_factor >= 1.0) || !(options.grading > 0.0)) {
    throw Error(ErrorCode::invalid_argument, "mesh options need h > 0, refine_factor >= 1, grading > 0");
  }
  const double h_near = options.h / options.refine_factor;
  const double scale = layout.cavity_scale();
  if (layout.size() > 0 && h_near > 0.5 * scale) {
    throw Error(ErrorCode::resolution_too_coarse,
                "cavity element size " + std::to_string(h_near) + " exceeds eps*eta/2 = " + std::to_string(0.5 * scale));
  }
  h_min_ = band_h_;
  for (std::size_t k = 0; k < layout.size(); ++k) {
    const Shape& s = layout.shapes[k];
    const double perimeter = layout.physical_boundary_measure(k);
    double hc = h_near;
    if (layout.dim == 2) {
      const double n = std::max<double>(options.min_cavity_segments, std::ceil(perimeter / h_near));
      hc = perimeter / n;
    } else {
      // Keep at least ~min_cavity_segments points around a great circle.
      const double girth = 2.0 * std::numbers::pi * scale * s.inscribed_radius();
      hc = std::min(h_near, girth / options.min_cavity_segments);
    }
    cavity_h_.push_back(hc);
    bound_radius_.push_back(scale * s.circumradius());
    max_bound_ = std::max(max_bound_, bound_radius_.back());
    h_min_ = std::min(h_min_, hc);
  }
  by_x_.resize(layout.size());
  for (std::size_t k = 0; k < by_x_.size(); ++k) by_x_[k] = k;
  std::sort(by_x_.begin(), by_x_.end(),
            [&](std::size_t a, std::size_t b) { return layout.centers[a][0] < layout.centers[b][0]; });
  for (std::size_t k : by_x_) x_sorted_.push_back(layout.centers[k][0]);
}

double SizeField::cavity_distance(std::size_t k, const Vec3& x) const {
  const auto& L = *layout_;
  const Shape& s = L.shapes[k];
  const double scale = L.cavity_scale();
  const Vec3 rel = (x - L.centers[k]) / scale - s.offset;
  if (L.dim == 2) {
    const double r = std::hypot(rel[0], rel[1]);
    if (s.family == ShapeFamily::ball) return scale * (r - s.semi_axes[0]);
    const double th = std::atan2(rel[1], rel[0]);
    const double R = s.radius(th);
    const double dR = s.radius_derivative(th);
    return scale * (r - R) / std::sqrt(1.0 + (dR / R) * (dR / R));
  }
  const double r = rel.norm();
  if (s.family == ShapeFamily::ball) return scale * (r - s.semi_axes[0]);
  double q = 0.0;
  for (int i = 0; i < 3; ++i) q += (rel[i] / s.semi_axes[i]) * (rel[i] / s.semi_axes[i]);
  if (q <= 0.0) return -scale * s.semi_axes.minCoeff();
  return scale * r * (1.0 - 1.0 / std::sqrt(q));
}

int SizeField::nearest_cavity(const Vec3& x, double* distance) const {
  int best = -1;
  double best_d = std::numeric_limits<double>::infinity();
  if (by_x_.empty()) {
    if (distance) *distance = best_d;
    return best;
  }
  // Candidates whose bounding disc may be closest: scan outward in x.
  const auto mid = std::lower_bound(x_sorted_.begin(), x_sorted_.end(), x[0]) - x_sorted_.begin();
  auto visit = [&](std::ptrdiff_t i) {
    const std::size_t k = by_x_[static_cast<std::size_t>(i)];
    const double lower = (x - layout_->centers[k]).head(layout_->dim).norm() - bound_radius_[k];
    if (lower >= best_d) return;
    const double d = cavity_distance(k, x);
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(k);
    }
  };
  const auto n = static_cast<std::ptrdiff_t>(by_x_.size());
  for (std::ptrdiff_t i = mid; i < n; ++i) {
    if (x_sorted_[static_cast<std::size_t>(i)] - x[0] - max_bound_ > best_d) break;
    visit(i);
  }
  for (std::ptrdiff_t i = mid - 1; i >= 0; --i) {
    if (x[0] - x_sorted_[static_cast<std::size_t>(i)] - max_bound_ > best_d) break;
    visit(i);
  }
  if (distance) *distance = best_d;
  return best;
}

double SizeField::operator()(const Vec3& x) const {
  const int n = layout_->dim - 1;
  double h = std::min(h_far_, band_h_ + g_ * std::abs(x[n] - layout_->s0));
  double d = 0.0;
  const int k = nearest_cavity(x, &d);
  if (k >= 0) h = std::min(h, cavity_h_[static_cast<std::size_t>(k)] + g_ * std::max(0.0, d));
  return h;
}

std::vector<double> equidistribute(const std::function<Vec3(double)>& curve, double t0, double t1,
                                   const std::function<double(const Vec3&)>& size, int min_segments) {
  constexpr int kSamples = 512;
  std::vector<double> ts(kSamples + 1);
  std::vector<double> acc(kSamples + 1, 0.0);
  Vec3 prev = curve(t0);
  double hprev = size(prev);
  ts[0] = t0;
  for (int i = 1; i <= kSamples; ++i) {
    ts[i] = t0 + (t1 - t0) * i / kSamples;
    const Vec3 p = curve(ts[i]);
    const double hp = size(p);
    acc[i] = acc[i - 1] + (p - prev).norm() * 0.5 * (1.0 / hprev + 1.0 / hp);
    prev = p;
    hprev = hp;
  }
  const int n = std::max(min_segments, static_cast<int>(std::ceil(acc.back() - 1e-9)));
  std::vector<double> out(static_cast<std::size_t>(n) + 1);
  out.front() = t0;
  out.back() = t1;
  int j = 1;
  for (int i = 1; i < n; ++i) {
    const double target = acc.back() * i / n;
    while (j < kSamples && acc[j] < target) ++j;
    const double w = acc[j] > acc[j - 1] ? (target - acc[j - 1]) / (acc[j] - acc[j - 1]) : 0.5;
    out[static_cast<std::size_t>(i)] = ts[j - 1] + w * (ts[j] - ts[j - 1]);
  }
  return out;
}

std::vector<Vec3> tree_points(const Vec3& lo, const Vec3& hi, const std::vector<int>& axes, const SizeField& size,
                              std::mt19937_64& rng, const std::function<bool(const Vec3&, double)>& accept) {
  std::vector<Vec3> out;
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  const double g = size.grading();
  const double hmin = size.min_size();

  // Root cells: near-cubic subdivision of the (possibly elongated) cell.
  double shortest = std::numeric_limits<double>::infinity();
  for (int a : axes) shortest = std::min(shortest, hi[a] - lo[a]);
  std::array<int, 3> counts{1, 1, 1};
  for (int a : axes) counts[a] = std::max(1, static_cast<int>(std::lround((hi[a] - lo[a]) / shortest)));

  struct Cell {
    Vec3 lo;
    Vec3 hi;
    int depth;
  };
  std::vector<Cell> stack;
  for (int i = 0; i < counts[0]; ++i) {
    for (int j = 0; j < counts[1]; ++j) {
      for (int k = 0; k < counts[2]; ++k) {
        Cell c{lo, hi, 0};
        const std::array<int, 3> idx{i, j, k};
        for (int a : axes) {
          const double w = (hi[a] - lo[a]) / counts[a];
          c.lo[a] = lo[a] + w * idx[a];
          c.hi[a] = c.lo[a] + w;
        }
        stack.push_back(c);
      }
    }
  }
  while (!stack.empty()) {
    const Cell c = stack.back();
    stack.pop_back();
    Vec3 center = 0.5 * (c.lo + c.hi);
    double side = 0.0;
    double radius2 = 0.0;
    for (int a : axes) {
      side = std::max(side, c.hi[a] - c.lo[a]);
      radius2 += 0.25 * (c.hi[a] - c.lo[a]) * (c.hi[a] - c.lo[a]);
    }
    const double allowed = std::max(size(center) - g * std::sqrt(radius2), hmin);
    if (side > allowed && c.depth < 24) {
      const int nchild = 1 << axes.size();
      for (int m = 0; m < nchild; ++m) {
        Cell child{c.lo, c.hi, c.depth + 1};
        for (std::size_t b = 0; b < axes.size(); ++b) {
          const int a = axes[b];
          if (m & (1 << b)) {
            child.lo[a] = center[a];
          } else {
            child.hi[a] = center[a];
          }
        }
        stack.push_back(child);
      }
      continue;
    }
    Vec3 p = center;
    for (int a : axes) p[a] += 0.1 * (c.hi[a] - c.lo[a]) * unit(rng);
    if (accept(p, size(p))) out.push_back(p);
  }
  return out;
}

}  // namespace perfhom::detail
