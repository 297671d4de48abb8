#include "perfhom/alpha.hpp"
#include "perfhom/error.hpp"
#include "perfhom/geometry.hpp"
#include "perfhom/mesh.hpp"
#include "support.hpp"

#include <boost/math/special_functions/ellint_2.hpp>
#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <cmath>
#include <numbers>
#include <sstream>

using namespace perfhom;
using perfhom::testing::disk_params;
using perfhom::testing::unit_box;
constexpr double kPi = std::numbers::pi;

namespace {

PerforationLayout single_disk(double eps, double radius = 0.25) {
  LayoutParams p = disk_params(2, radius);
  p.centers = {Vec3(0.5, 0.0, 0.0)};
  return make_layout(LayoutKind::explicit_list, p, eps);
}

double cavity_perimeter(const Mesh& m) {
  double s = 0.0;
  for (auto f : m.cavity_facets()) s += m.facet_measure(f);
  return s;
}

}  // namespace

TEST(Layout, PeriodicLatticeCentres) {
  const auto layout = make_layout(LayoutKind::periodic, disk_params(), 1.0 / 8);
  ASSERT_EQ(layout.size(), 8u);
  for (std::size_t k = 0; k < 8; ++k) {
    EXPECT_NEAR(layout.centers[k][0], (k + 0.5) / 8, 1e-14);
    EXPECT_NEAR(layout.centers[k][1], 0.0, 1e-14);
  }
  EXPECT_NEAR(layout.manifold_measure(), 1.0, 1e-14);
}

TEST(Layout, PeriodicLattice3D) {
  const auto layout = make_layout(LayoutKind::periodic, disk_params(3), 1.0 / 4);
  EXPECT_EQ(layout.size(), 16u);
  EXPECT_TRUE(validate_layout(layout).pass);
}

TEST(Layout, ZeroPerturbationIsPeriodic) {
  LayoutParams p = disk_params();
  const auto a = make_layout(LayoutKind::periodic, p, 1.0 / 16);
  p.perturbation = 0.0;
  p.size_perturbation = 0.0;
  const auto b = make_layout(LayoutKind::perturbed_periodic, p, 1.0 / 16);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t k = 0; k < a.size(); ++k) {
    EXPECT_EQ((a.centers[k] - b.centers[k]).norm(), 0.0);
    EXPECT_EQ(a.shapes[k].semi_axes, b.shapes[k].semi_axes);
  }
}

TEST(Layout, PerturbedShiftsStayWithinBound) {
  LayoutParams p = disk_params(2, 0.3);
  p.periods = {1.2, 1.0};
  p.perturbation = 0.1;
  p.size_perturbation = 0.1;
  const double eps = 1.0 / 16;
  const auto a = make_layout(LayoutKind::periodic, p, eps);
  const auto b = make_layout(LayoutKind::perturbed_periodic, p, eps);
  ASSERT_EQ(a.size(), b.size());
  double shift = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) shift = std::max(shift, (a.centers[k] - b.centers[k]).norm());
  EXPECT_GT(shift, 0.0);
  EXPECT_LE(shift, 0.1 * eps + 1e-15);
  EXPECT_TRUE(validate_layout(b).pass);
}

TEST(Layout, InfeasiblePerturbationRejected) {
  LayoutParams p = disk_params(2, 0.2);
  p.perturbation = 0.05;
  try {
    make_layout(LayoutKind::perturbed_periodic, p, 1.0 / 16);
    FAIL() << "perturbation breaking disjointness accepted";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::infeasible_spacing);
  }
}

TEST(Layout, SeedReproducible) {
  LayoutParams p = disk_params(2, 0.2);
  p.perturbation = 0.01;
  p.seed = 99;
  const auto a = make_layout(LayoutKind::perturbed_periodic, p, 1.0 / 12);
  const auto b = make_layout(LayoutKind::perturbed_periodic, p, 1.0 / 12);
  for (std::size_t k = 0; k < a.size(); ++k) EXPECT_EQ(a.centers[k], b.centers[k]);
}

TEST(Layout, ClusteredCountGrowsLikeClusterLattice) {
  LayoutParams p = disk_params();
  p.cluster_beta = 0.25;
  double lo = 1e300, hi = 0.0;
  for (double eps : perfhom::testing::default_sweep()) {
    const auto layout = make_layout(LayoutKind::clustered, p, eps);
    EXPECT_TRUE(validate_layout(layout).pass);
    const int n = density_count(layout, 0.25);
    const double scaled = n * std::pow(eps, p.cluster_beta);
    lo = std::min(lo, scaled);
    hi = std::max(hi, scaled);
  }
  EXPECT_LE(hi / lo, 2.0);
}

TEST(Layout, EtaRuleClamps) {
  EXPECT_DOUBLE_EQ((EtaRule{1.0, 0.5})(0.25), 0.5);
  EXPECT_DOUBLE_EQ((EtaRule{4.0, 0.0})(0.25), 1.0);
}

TEST(Layout, InvalidInputs) {
  LayoutParams p = disk_params();
  EXPECT_THROW(make_layout(LayoutKind::periodic, p, -0.1), Error);
  p.shape = Shape::ball(2, 0.45);  // outside B_{R2}
  try {
    make_layout(LayoutKind::periodic, p, 0.125);
    FAIL() << "shape outside B_R2 accepted";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::invalid_argument);
  }
  p = disk_params();
  p.s0 = 2.0;
  try {
    make_layout(LayoutKind::periodic, p, 0.125);
    FAIL() << "manifold outside the domain accepted";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::manifold_outside_domain);
  }
}

TEST(Validate, PeriodicDisksPassWithGapMargin) {
  const double eps = 1.0 / 16;
  const auto layout = make_layout(LayoutKind::periodic, disk_params(2, 0.2), eps);
  const auto rep = validate_layout(layout);
  EXPECT_TRUE(rep.pass);
  const auto& c = layout.constants;
  // Distance between neighbouring bump supports is at least (b - 1) R2 eps.
  const double min_dist = rep.min_gap_ratio * 2.0 * c.b * c.R2 * eps;
  EXPECT_GE(min_dist - 2.0 * c.R2 * eps, (c.b - 1.0) * c.R2 * eps);
  for (const auto& chk : rep.checks) EXPECT_GE(chk.margin, 0.0) << chk.name;
}

TEST(Validate, CloseCentresFailDisjointness) {
  const double eps = 1.0 / 8;
  LayoutParams p = disk_params(2, 0.2);
  const double d = 1.5 * p.constants.b * p.constants.R2 * eps;
  p.centers = {Vec3(0.4, 0, 0), Vec3(0.4 + d, 0, 0)};
  const auto rep = validate_layout(make_layout(LayoutKind::explicit_list, p, eps));
  EXPECT_FALSE(rep.pass);
  EXPECT_NEAR(rep.min_gap_ratio, 0.75, 1e-12);
  bool seen = false;
  for (const auto& chk : rep.checks) {
    if (chk.name == "A2-disjointness") {
      seen = true;
      EXPECT_FALSE(chk.pass);
      EXPECT_LT(chk.margin, 0.0);
    }
  }
  EXPECT_TRUE(seen);
}

TEST(Validate, OffsetFromManifoldChecked) {
  LayoutParams p = disk_params(2, 0.2);
  p.centers = {Vec3(0.5, 0.6 * 0.125, 0)};
  const auto rep = validate_layout(make_layout(LayoutKind::explicit_list, p, 0.125));
  EXPECT_FALSE(rep.pass);
  EXPECT_NEAR(rep.max_offset_ratio, 0.6, 1e-12);
}

TEST(Shape, PerimeterOracles) {
  for (double rho : {0.1, 0.25, 0.35}) {
    const Shape s = Shape::ball(2, rho);
    EXPECT_NEAR(s.boundary_measure, 2 * kPi * rho, 1e-12);
    EXPECT_NEAR(s.compute_boundary_measure(), 2 * kPi * rho, 1e-10);
    EXPECT_NEAR(Shape::ball(3, rho).compute_boundary_measure(), 4 * kPi * rho * rho, 1e-9);
  }
  const double a = 0.3, b = 0.18;
  const double ecc = std::sqrt(1 - (b * b) / (a * a));
  const Shape e = Shape::ellipse(2, Vec3(a, b, 0));
  EXPECT_NEAR(e.boundary_measure, 4 * a * boost::math::ellint_2(ecc), 1e-10);
  EXPECT_NEAR(e.inscribed_radius(), b, 1e-12);
  EXPECT_NEAR(e.circumradius(), a, 1e-12);
}

TEST(Shape, StarContainsInscribedBall) {
  const Shape s = Shape::star(0.25, 0.2, 5);
  EXPECT_NEAR(s.inscribed_radius(), 0.25 * 0.8, 1e-6);
  EXPECT_NEAR(s.circumradius(), 0.25 * 1.2, 1e-6);
  for (int i = 0; i < 64; ++i) {
    const double t = 2 * kPi * i / 64;
    EXPECT_TRUE(s.contains(0.99 * s.boundary_point(t)));
    EXPECT_FALSE(s.contains(1.01 * s.boundary_point(t)));
  }
}

TEST(Mesh, NoCavitiesGivesBoxMesh) {
  LayoutParams p = disk_params();
  const auto layout = make_layout(LayoutKind::explicit_list, p, 0.125);
  ASSERT_EQ(layout.size(), 0u);
  MeshOptions o;
  o.h = 0.1;
  const Mesh m = mesh_perforated(layout, o);
  EXPECT_TRUE(m.cavity_facets().empty());
  EXPECT_NEAR(m.total_volume(), 1.0, 1e-12);
  for (std::size_t e = 0; e < m.num_simplices(); ++e) EXPECT_GT(m.simplex_volume(e), 0.0);
}

TEST(Mesh, PerimeterErrorQuartersUnderRefinement) {
  const auto layout = single_disk(0.25);
  const double exact = layout.physical_boundary_measure(0);
  double prev = 0.0;
  for (int level = 0; level < 3; ++level) {
    MeshOptions o;
    o.h = 0.1 / (1 << level);
    o.min_cavity_segments = 4;
    const Mesh m = mesh_perforated(layout, o);
    const double err = exact - cavity_perimeter(m);
    EXPECT_GT(err, 0.0);  // inscribed polygon
    if (level > 0) {
      EXPECT_GT(prev / err, 3.0);
      EXPECT_LT(prev / err, 5.0);
    }
    prev = err;
  }
}

TEST(Mesh, CavityGroupsAndVolume) {
  const auto layout = make_layout(LayoutKind::periodic, disk_params(), 1.0 / 8);
  MeshOptions o;
  o.h = 0.05;
  o.band_h = 1.0 / 32;
  const MeshPair mp = mesh_perforated_with_companion(layout, o);
  const Mesh& m = mp.perforated;
  EXPECT_EQ(m.num_cavity_groups(), static_cast<int>(layout.size()));
  double holes = 0.0;
  for (std::size_t k = 0; k < layout.size(); ++k) holes += kPi * std::pow(0.25 * layout.eps, 2);
  EXPECT_NEAR(m.total_volume(), 1.0 - holes, 0.02 * holes);
  for (std::size_t e = 0; e < m.num_simplices(); ++e) ASSERT_GT(m.simplex_volume(e), 0.0);
  EXPECT_NEAR(mp.companion.total_volume(), 1.0, 1e-12);
  double s = 0.0;
  for (auto f : mp.companion.interface_facets()) s += mp.companion.facet_measure(f);
  EXPECT_NEAR(s, 1.0, 1e-12);
}

TEST(Mesh, CavityFacetsNearExactBoundary) {
  const auto layout = make_layout(LayoutKind::periodic, disk_params(), 1.0 / 8);
  MeshOptions o;
  o.h = 0.05;
  const Mesh m = mesh_perforated(layout, o);
  const double r = 0.25 * layout.eps;
  for (auto f : m.cavity_facets()) {
    const auto& fc = m.facets[f];
    const int k = fc.tag - kTagCavityBase;
    for (int i = 0; i < 2; ++i) {
      EXPECT_NEAR((m.vertices[fc.v[i]] - layout.centers[k]).norm(), r, 1e-12);
    }
  }
}

TEST(Mesh, Perforated3DBall) {
  LayoutParams p = disk_params(3);
  p.centers = {Vec3(0.5, 0.5, 0.0)};
  const auto layout = make_layout(LayoutKind::explicit_list, p, 0.5);
  MeshOptions o;
  o.h = 0.2;
  o.refine_factor = 3.0;
  const Mesh m = mesh_perforated(layout, o);
  for (std::size_t e = 0; e < m.num_simplices(); ++e) ASSERT_GT(m.simplex_volume(e), 0.0);
  const double r = 0.125;
  const double hole = 4.0 / 3.0 * kPi * r * r * r;
  EXPECT_NEAR(m.total_volume(), 1.0 - hole, 0.15 * hole);
  double area = 0.0;
  for (auto f : m.cavity_facets()) area += m.facet_measure(f);
  EXPECT_NEAR(area, 4 * kPi * r * r, 0.1 * 4 * kPi * r * r);
  EXPECT_EQ(m.num_cavity_groups(), 1);
}

TEST(Mesh, InterfaceStructuredCounts) {
  Box b = unit_box(2);
  b.lo[1] = -1;
  b.hi[1] = 1;
  for (int n : {16, 32}) {
    const Mesh m = mesh_interface(b, 0.0, 1.0 / n);
    const auto iface = m.interface_facets();
    EXPECT_EQ(iface.size(), static_cast<std::size_t>(n));
    double s = 0.0;
    for (auto f : iface) s += m.facet_measure(f);
    EXPECT_NEAR(s, 1.0, 1e-14);
    for (const auto& simplex : m.simplices) {
      double lo = 1e9, hi = -1e9;
      for (int i = 0; i < 3; ++i) {
        lo = std::min(lo, m.vertices[simplex[i]][1]);
        hi = std::max(hi, m.vertices[simplex[i]][1]);
      }
      EXPECT_FALSE(lo < -1e-14 && hi > 1e-14);
    }
  }
  const Mesh m3 = mesh_interface(unit_box(3), 0.0, 0.25);
  double area = 0.0;
  for (auto f : m3.interface_facets()) area += m3.facet_measure(f);
  EXPECT_NEAR(area, 1.0, 1e-14);
}

TEST(Mesh, FileRoundTrip) {
  const Mesh m = mesh_interface(unit_box(2), 0.0, 0.25);
  std::stringstream ss;
  write_mesh(m, ss);
  const Mesh r = read_mesh(ss);
  ASSERT_EQ(r.num_vertices(), m.num_vertices());
  ASSERT_EQ(r.num_simplices(), m.num_simplices());
  ASSERT_EQ(r.facets.size(), m.facets.size());
  for (std::size_t i = 0; i < m.num_vertices(); ++i) EXPECT_EQ(r.vertices[i], m.vertices[i]);
  for (std::size_t f = 0; f < m.facets.size(); ++f) EXPECT_EQ(r.facets[f].tag, m.facets[f].tag);
  std::stringstream bad("not a mesh");
  EXPECT_THROW(read_mesh(bad), Error);
}

TEST(Mesh, PointLocatorFindsCentroids) {
  const Mesh m = mesh_interface(unit_box(2), 0.0, 0.1);
  const PointLocator loc(m);
  for (std::size_t e = 0; e < m.num_simplices(); e += 7) {
    const auto hit = loc.locate(m.simplex_centroid(e));
    ASSERT_TRUE(hit.has_value());
    EXPECT_EQ(hit->simplex, e);
    EXPECT_NEAR(hit->bary[0], 1.0 / 3, 1e-12);
  }
  EXPECT_FALSE(loc.locate(Vec3(2.0, 0.0, 0.0)).has_value());
}

TEST(Layout, JsonRoundTrip) {
  LayoutParams p = disk_params(2, 0.2);
  p.perturbation = 0.01;
  const auto a = make_layout(LayoutKind::perturbed_periodic, p, 1.0 / 12, EtaRule{1.0, 0.5});
  const nlohmann::json j = a;
  const auto b = j.get<PerforationLayout>();
  EXPECT_EQ(b.eps, a.eps);
  EXPECT_EQ(b.eta, a.eta);
  ASSERT_EQ(b.size(), a.size());
  for (std::size_t k = 0; k < a.size(); ++k) {
    EXPECT_EQ(b.centers[k], a.centers[k]);
    EXPECT_EQ(b.shapes[k].semi_axes, a.shapes[k].semi_axes);
  }
}
