#include "perfhom/error.hpp"
#include "perfhom/geometry.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace perfhom {

double Box::measure() const {
  double m = 1.0;
  for (int i = 0; i < dim; ++i) m *= extent(i);
  return m;
}

bool Box::contains(const Vec3& x, double tol) const {
  for (int i = 0; i < dim; ++i) {
    if (x[i] < lo[i] - tol || x[i] > hi[i] + tol) return false;
  }
  return true;
}

double Box::distance_to_boundary(const Vec3& x) const {
  double d = std::numeric_limits<double>::infinity();
  for (int i = 0; i < dim; ++i) d = std::min({d, x[i] - lo[i], hi[i] - x[i]});
  return d;
}

Vec3 PerforationLayout::projected_center(std::size_t k) const {
  Vec3 p = centers[k];
  p[normal_axis()] = s0;
  return p;
}

double PerforationLayout::manifold_measure() const {
  double m = 1.0;
  for (int i = 0; i + 1 < dim; ++i) m *= domain.extent(i);
  return m;
}

double PerforationLayout::physical_boundary_measure(std::size_t k) const {
  return std::pow(cavity_scale(), dim - 1) * shapes[k].boundary_measure;
}

int PerforationLayout::cavity_containing(const Vec3& x) const {
  const double scale = cavity_scale();
  for (std::size_t k = 0; k < centers.size(); ++k) {
    const Vec3 y = (x - centers[k]) / scale;
    if (y.head(dim).norm() > shapes[k].circumradius()) continue;
    if (shapes[k].contains(y)) return static_cast<int>(k);
  }
  return -1;
}

double EtaRule::operator()(double eps) const {
  const double eta = coefficient * std::pow(eps, exponent);
  if (!(eta > 0.0)) throw Error(ErrorCode::invalid_argument, "eta must be positive");
  return std::min(eta, 1.0);
}

namespace {

void check_common(const LayoutParams& p, double eps) {
  if (p.dim != 2 && p.dim != 3) throw Error(ErrorCode::invalid_argument, "dimension must be 2 or 3");
  if (p.domain.dim != p.dim) throw Error(ErrorCode::invalid_argument, "domain dimension mismatch");
  if (!(eps > 0.0)) throw Error(ErrorCode::invalid_argument, "eps must be positive");
  const int n = p.dim - 1;
  if (!(p.s0 > p.domain.lo[n] && p.s0 < p.domain.hi[n])) {
    throw Error(ErrorCode::manifold_outside_domain, "S = {x_n = s0} does not cross the domain");
  }
  const auto& c = p.constants;
  if (!(c.R1 > 0.0 && c.R1 < c.R2 && c.b > 1.0 && c.R0 > 0.0 && c.tau0 > 0.0)) {
    throw Error(ErrorCode::invalid_argument, "constants must satisfy 0 < R1 < R2, b > 1, R0 > 0, tau0 > 0");
  }
}

void check_shape(const Shape& s, const LayoutParams& p) {
  if (s.dim != p.dim) throw Error(ErrorCode::invalid_argument, "shape dimension mismatch");
  if (s.circumradius() > p.constants.R2 + 1e-12) {
    throw Error(ErrorCode::invalid_argument, "shape is not contained in B_R2(0)");
  }
  if (s.inscribed_radius() < p.constants.R1 - 1e-12) {
    throw Error(ErrorCode::invalid_argument, "shape does not contain a ball of radius R1");
  }
}

/// Tangential lattice positions eps * (period * k + offset) strictly inside (lo, hi).
std::vector<double> lattice_positions(double lo, double hi, double eps, double period, double offset) {
  std::vector<double> out;
  const auto k0 = static_cast<long>(std::ceil((lo / eps - offset) / period)) - 1;
  const auto k1 = static_cast<long>(std::floor((hi / eps - offset) / period)) + 1;
  for (long k = k0; k <= k1; ++k) {
    const double x = eps * (period * static_cast<double>(k) + offset);
    if (x > lo && x < hi) out.push_back(x);
  }
  return out;
}

/// Keeps centres whose b R2 eps ball stays inside the domain.
void push_if_clear(PerforationLayout& layout, const Vec3& c, const Shape& shape) {
  const double clearance = layout.constants.b * layout.constants.R2 * layout.eps;
  if (layout.domain.distance_to_boundary(c) < clearance) {
    ++layout.dropped;
    return;
  }
  layout.centers.push_back(c);
  layout.shapes.push_back(shape);
}

PerforationLayout base_layout(const LayoutParams& p, double eps, double eta) {
  PerforationLayout layout;
  layout.dim = p.dim;
  layout.domain = p.domain;
  layout.s0 = p.s0;
  layout.eps = eps;
  layout.eta = eta;
  layout.constants = p.constants;
  return layout;
}

PerforationLayout periodic(const LayoutParams& p, double eps, double eta) {
  check_shape(p.shape, p);
  const int n = p.dim - 1;
  for (int i = 0; i < n; ++i) {
    if (!(p.periods[i] > 0.0)) throw Error(ErrorCode::invalid_argument, "cell periods must be positive");
    if (p.periods[i] < 2.0 * p.constants.b * p.constants.R2) {
      throw Error(ErrorCode::infeasible_spacing, "cell period below 2 b R2 violates cavity disjointness");
    }
  }
  if (std::abs(p.normal_offset) > p.constants.R0) {
    throw Error(ErrorCode::invalid_argument, "normal offset exceeds R0");
  }
  PerforationLayout layout = base_layout(p, eps, eta);
  const double xn = p.s0 + eps * p.normal_offset;
  const auto xs = lattice_positions(p.domain.lo[0], p.domain.hi[0], eps, p.periods[0], p.cell_offset[0]);
  if (p.dim == 2) {
    for (double x : xs) push_if_clear(layout, Vec3(x, xn, 0.0), p.shape);
  } else {
    const auto ys = lattice_positions(p.domain.lo[1], p.domain.hi[1], eps, p.periods[1], p.cell_offset[1]);
    for (double x : xs) {
      for (double y : ys) push_if_clear(layout, Vec3(x, y, xn), p.shape);
    }
  }
  if (layout.dropped > 0) {
    spdlog::warn("make_layout: dropped {} cavities closer than b*R2*eps to the outer boundary", layout.dropped);
  }
  return layout;
}

PerforationLayout perturbed(const LayoutParams& p, double eps, double eta) {
  if (p.perturbation < 0.0 || p.size_perturbation < 0.0 || p.size_perturbation >= 1.0) {
    throw Error(ErrorCode::invalid_argument, "perturbation magnitudes must be non-negative (size < 1)");
  }
  // Worst-case shifts and rescalings must keep A2, A3 and the R0 band.
  const auto& c = p.constants;
  for (int i = 0; i + 1 < p.dim; ++i) {
    if (p.periods[i] - 2.0 * p.perturbation < 2.0 * c.b * c.R2) {
      throw Error(ErrorCode::infeasible_spacing, "perturbation can bring centres closer than 2 b R2 eps");
    }
  }
  if (std::abs(p.normal_offset) + p.perturbation > c.R0) {
    throw Error(ErrorCode::infeasible_spacing, "perturbation can move centres beyond R0 eps from S");
  }
  if (p.shape.circumradius() * (1.0 + p.size_perturbation) > c.R2 ||
      p.shape.inscribed_radius() * (1.0 - p.size_perturbation) < c.R1) {
    throw Error(ErrorCode::infeasible_spacing, "size perturbation leaves the R1 / R2 bounds");
  }
  PerforationLayout layout = periodic(p, eps, eta);
  std::mt19937_64 rng(p.seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (std::size_t k = 0; k < layout.size(); ++k) {
    Vec3 dir = Vec3::Zero();
    do {
      for (int i = 0; i < p.dim; ++i) dir[i] = unit(rng);
    } while (dir.squaredNorm() > 1.0);
    layout.centers[k] += p.perturbation * eps * dir;
    const double scale = 1.0 + p.size_perturbation * unit(rng);
    if (p.size_perturbation > 0.0) {
      Shape s = layout.shapes[k];
      if (s.family == ShapeFamily::ball) {
        s = Shape::ball(s.dim, s.semi_axes[0] * scale, s.offset);
      } else if (s.family == ShapeFamily::ellipse) {
        s = Shape::ellipse(s.dim, s.semi_axes * scale, s.offset);
      } else {
        s = Shape::star(s.semi_axes[0] * scale, s.star_amplitude, s.star_lobes, s.offset);
      }
      layout.shapes[k] = s;
    }
  }
  return layout;
}

PerforationLayout clustered(const LayoutParams& p, double eps, double eta) {
  check_shape(p.shape, p);
  if (!(p.cluster_pitch > 0.0) || !(p.cluster_extent > 0.0)) {
    throw Error(ErrorCode::invalid_argument, "cluster pitch and extent must be positive");
  }
  if (p.cluster_pitch < 2.0 * p.constants.b * p.constants.R2) {
    throw Error(ErrorCode::infeasible_spacing, "cluster pitch below 2 b R2 violates cavity disjointness");
  }
  std::vector<Vec3> anchors = p.cluster_centers;
  if (anchors.empty()) {
    const auto quarter = [&](int axis, double f) { return p.domain.lo[axis] + f * p.domain.extent(axis); };
    if (p.dim == 2) {
      anchors = {Vec3(quarter(0, 0.25), 0, 0), Vec3(quarter(0, 0.75), 0, 0)};
    } else {
      for (double fx : {0.25, 0.75}) {
        for (double fy : {0.25, 0.75}) anchors.emplace_back(quarter(0, fx), quarter(1, fy), 0.0);
      }
    }
  }
  const double extent = p.cluster_extent * std::pow(eps, 1.0 - p.cluster_beta);
  const double pitch = p.cluster_pitch * eps;
  const int m = 1 + static_cast<int>(std::floor(extent / pitch + 1e-12));
  PerforationLayout layout = base_layout(p, eps, eta);
  const double xn = p.s0 + eps * p.normal_offset;
  for (const Vec3& a : anchors) {
    for (int i = 0; i < m; ++i) {
      const double x = a[0] + pitch * (i - 0.5 * (m - 1));
      if (p.dim == 2) {
        push_if_clear(layout, Vec3(x, xn, 0.0), p.shape);
        continue;
      }
      for (int j = 0; j < m; ++j) {
        const double y = a[1] + pitch * (j - 0.5 * (m - 1));
        push_if_clear(layout, Vec3(x, y, xn), p.shape);
      }
    }
  }
  if (layout.dropped > 0) {
    spdlog::warn("make_layout: dropped {} clustered cavities near the outer boundary", layout.dropped);
  }
  return layout;
}

PerforationLayout explicit_list(const LayoutParams& p, double eps, double eta) {
  if (!p.shapes.empty() && p.shapes.size() != 1 && p.shapes.size() != p.centers.size()) {
    throw Error(ErrorCode::invalid_argument, "explicit layout needs one shape or one per centre");
  }
  PerforationLayout layout = base_layout(p, eps, eta);
  for (std::size_t k = 0; k < p.centers.size(); ++k) {
    const Shape& s = p.shapes.empty() ? p.shape : p.shapes[p.shapes.size() == 1 ? 0 : k];
    check_shape(s, p);
    push_if_clear(layout, p.centers[k], s);
  }
  if (layout.dropped > 0) {
    spdlog::warn("make_layout: dropped {} explicit cavities near the outer boundary", layout.dropped);
  }
  return layout;
}

}  // namespace

PerforationLayout make_layout(LayoutKind kind, const LayoutParams& params, double eps, const EtaRule& eta_rule) {
  check_common(params, eps);
  const double eta = eta_rule(eps);
  switch (kind) {
    case LayoutKind::periodic: return periodic(params, eps, eta);
    case LayoutKind::perturbed_periodic: return perturbed(params, eps, eta);
    case LayoutKind::clustered: return clustered(params, eps, eta);
    case LayoutKind::explicit_list: return explicit_list(params, eps, eta);
  }
  throw Error(ErrorCode::invalid_argument, "unknown layout kind");
}

ValidationReport validate_layout(const PerforationLayout& layout) {
  ValidationReport r;
  const auto& c = layout.constants;
  const double eps = layout.eps;
  const int n = layout.normal_axis();
  const std::size_t count = layout.size();

  // Pairwise gap via sort along the first axis with a window of 2 b R2 eps.
  const double disk = 2.0 * c.b * c.R2 * eps;
  std::vector<std::size_t> order(count);
  for (std::size_t k = 0; k < count; ++k) order[k] = k;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return layout.centers[a][0] < layout.centers[b][0]; });
  double min_dist = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t j = i + 1; j < count; ++j) {
      const Vec3& a = layout.centers[order[i]];
      const Vec3& b = layout.centers[order[j]];
      if (b[0] - a[0] >= std::min(min_dist, disk)) break;
      min_dist = std::min(min_dist, (a - b).head(layout.dim).norm());
    }
  }
  // Pairs not visited are at least `disk` apart along x1.
  if (count >= 2 && !std::isfinite(min_dist)) min_dist = disk;
  r.min_gap_ratio = count >= 2 ? min_dist / disk : std::numeric_limits<double>::infinity();

  r.max_offset_ratio = 0.0;
  r.min_inscribed_radius = std::numeric_limits<double>::infinity();
  r.max_circumradius = 0.0;
  r.sup_boundary_measure = 0.0;
  r.min_domain_clearance = std::numeric_limits<double>::infinity();
  const double scale = layout.cavity_scale();
  for (std::size_t k = 0; k < count; ++k) {
    const Shape& s = layout.shapes[k];
    r.max_offset_ratio = std::max(r.max_offset_ratio, std::abs(layout.centers[k][n] - layout.s0) / eps);
    r.min_inscribed_radius = std::min(r.min_inscribed_radius, s.inscribed_radius());
    r.max_circumradius = std::max(r.max_circumradius, s.circumradius());
    r.sup_boundary_measure = std::max(r.sup_boundary_measure, s.boundary_measure);
    r.min_domain_clearance =
        std::min(r.min_domain_clearance, layout.domain.distance_to_boundary(layout.centers[k]) - scale * s.circumradius());
  }
  if (count == 0) {
    r.min_inscribed_radius = c.R1;
    r.max_circumradius = 0.0;
  }

  auto add = [&r](std::string name, bool pass, double margin, std::string detail) {
    r.checks.push_back({std::move(name), pass, margin, std::move(detail)});
    r.pass = r.pass && pass;
  };
  add("A2-disjointness", count < 2 || r.min_gap_ratio >= 1.0 - 1e-12, r.min_gap_ratio - 1.0,
      "min centre distance / (2 b R2 eps)");
  add("A2-inner-ball", r.min_inscribed_radius >= c.R1 - 1e-12, r.min_inscribed_radius - c.R1,
      "inscribed radius about M_{k,eps} minus R1");
  add("A2-outer-ball", r.max_circumradius <= c.R2 + 1e-12, c.R2 - r.max_circumradius, "R2 minus shape circumradius");
  add("distance-to-S", r.max_offset_ratio <= c.R0 + 1e-12, c.R0 - r.max_offset_ratio, "R0 minus max dist(M_k, S)/eps");
  add("inside-domain", count == 0 || r.min_domain_clearance > 0.0, count == 0 ? 0.0 : r.min_domain_clearance,
      "min distance from cavity bounding ball to the outer boundary");
  add("S-inside-domain", layout.s0 > layout.domain.lo[n] && layout.s0 < layout.domain.hi[n],
      std::min(layout.s0 - layout.domain.lo[n], layout.domain.hi[n] - layout.s0), "distance from S to the box faces");
  return r;
}

std::string to_string(LayoutKind kind) {
  switch (kind) {
    case LayoutKind::periodic: return "periodic";
    case LayoutKind::perturbed_periodic: return "perturbed-periodic";
    case LayoutKind::clustered: return "clustered";
    case LayoutKind::explicit_list: return "explicit";
  }
  return "periodic";
}

LayoutKind layout_kind_from_string(const std::string& name) {
  if (name == "periodic") return LayoutKind::periodic;
  if (name == "perturbed-periodic" || name == "perturbed") return LayoutKind::perturbed_periodic;
  if (name == "clustered") return LayoutKind::clustered;
  if (name == "explicit") return LayoutKind::explicit_list;
  throw Error(ErrorCode::invalid_argument, "unknown layout kind '" + name + "'");
}

}  // namespace perfhom
