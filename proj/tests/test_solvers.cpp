#include "perfhom/error.hpp"
#include "perfhom/solvers.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

using namespace perfhom;
using perfhom::testing::disk_params;

namespace {

const ScalarField kOne = [](const Vec3&) { return Complex(1.0); };
const ScalarField kSmooth = [](const Vec3& x) { return Complex(1.0 + x[0] + std::sin(3.0 * x[1]), 0.5 * x[0]); };

Mesh perforated_mesh(double eps, double h = 0.1) {
  const auto layout = make_layout(LayoutKind::periodic, disk_params(), eps);
  MeshOptions o;
  o.h = h;
  o.band_h = eps / 2;
  o.refine_factor = std::max(8.0, 4.0 * h / eps);
  return mesh_perforated(layout, o);
}

// Strip (0, 1/8) x (-1, 1): Dirichlet at x_2 = +-1, natural on the sides.
Mesh strip(int n, bool with_interface = true) {
  std::vector<double> ax0, ax1;
  for (int i = 0; i <= 4; ++i) ax0.push_back(0.125 * i / 4);
  for (int i = 0; i <= n; ++i) ax1.push_back(-1.0 + 2.0 * i / n);
  const std::vector<std::vector<double>> axes{ax0, ax1};
  return with_interface ? mesh_tensor(2, axes, 0.0) : mesh_tensor(2, axes);
}

SolveOptions strip_options() {
  SolveOptions o;
  o.lambda = -1.0;
  o.linear_tol = 1e-13;
  o.dirichlet_region = [](const Vec3& x) { return std::abs(std::abs(x[1]) - 1.0) < 1e-12; };
  return o;
}

// -u'' + u = 1 on (-1, 1), u(+-1) = 0, u'(0+) - u'(0-) = c sigma u(0).
double transmission_exact(double t, double cs) {
  const double k = cs * std::sinh(1.0) / 2.0;
  const double P = -(1.0 + k) / (std::cosh(1.0) + k);
  const double Q = cs * (1.0 + P) / 2.0;
  t = std::abs(t);
  return 1.0 + P * std::cosh(t) + Q * std::sinh(t);
}

double nodal_error(const DiscreteField& u, const std::function<double(double)>& exact) {
  double e = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    e = std::max(e, std::abs(u.values[static_cast<Eigen::Index>(i)] - exact(u.mesh->vertices[i][1])));
  }
  return e;
}

}  // namespace

TEST(Perforated, ZeroRhsGivesZero) {
  const Mesh m = perforated_mesh(0.125);
  const auto r = solve_perforated(m, CoefficientSet::laplacian(2), NonlinearBC::saturating(2.0),
                                  [](const Vec3&) { return Complex(0.0); });
  EXPECT_EQ(r.u.values.norm(), 0.0);
}

TEST(Perforated, LinearPicardMatchesDirectSolve) {
  const Mesh m = perforated_mesh(0.125);
  const Complex sigma(1.5, 0.5);
  SolveOptions o;
  o.lambda = -12.0;  // complex sigma is not monotone: lambda0 = -10.25
  o.picard_tol = 1e-12;
  o.linear_tol = 1e-13;
  const auto r = solve_perforated(m, CoefficientSet::laplacian(2), NonlinearBC::linear(sigma), kSmooth, o);
  AssembledSystem sys = assemble(m, CoefficientSet::laplacian(2, -12.0), kSmooth);
  const auto quad = facet_quadrature(m, tagged_facets(m, true));
  sys.K += sigma * boundary_mass(quad, m.num_vertices());
  const auto ref = solve_linear(sys, sys.load, 1e-14, LinearMethod::direct);
  EXPECT_LE(norms(m, r.u.values - ref.values).h1, 1e-10 * norms(ref).h1);
}

TEST(Perforated, UniqueFromTwoStarts) {
  const Mesh m = perforated_mesh(0.125);
  SolveOptions o;
  o.picard_tol = 1e-10;
  o.newton = false;
  const NonlinearBC a = NonlinearBC::saturating(Complex(2.0, 1.0));
  const auto r1 = solve_perforated(m, CoefficientSet::laplacian(2), a, kSmooth, o);
  o.initial_guess = CVector::Constant(static_cast<Eigen::Index>(m.num_vertices()), Complex(5.0, -3.0));
  const auto r2 = solve_perforated(m, CoefficientSet::laplacian(2), a, kSmooth, o);
  EXPECT_LE(norms(m, r1.u.values - r2.u.values).h1, 10 * o.picard_tol * norms(r1.u).h1);
}

TEST(Perforated, PicardContracts) {
  const Mesh m = perforated_mesh(0.125);
  const NonlinearBC a = NonlinearBC::saturating(Complex(3.0, 1.0));
  std::vector<double> worst;
  for (double shift : {0.0, -5.0}) {
    SolveOptions o;
    o.newton = false;
    o.picard_tol = 1e-11;
    const double lambda0 = estimate_lambda0(CoefficientSet::laplacian(2), a, {}).lambda0;
    o.lambda = lambda0 - 1.0 + shift;
    const auto r = solve_perforated(m, CoefficientSet::laplacian(2), a, kSmooth, o);
    ASSERT_GE(r.diagnostics.contraction_ratios.size(), 2u);
    const double mx =
        *std::max_element(r.diagnostics.contraction_ratios.begin(), r.diagnostics.contraction_ratios.end());
    EXPECT_LT(mx, 1.0);
    worst.push_back(mx);
  }
  EXPECT_LT(worst[1], worst[0]);
}

TEST(Perforated, NewtonFinishesToResidualTolerance) {
  const Mesh m = perforated_mesh(0.125);
  SolveOptions o;
  o.picard_tol = 1e-10;
  const auto r = solve_perforated(m, CoefficientSet::laplacian(2), NonlinearBC::saturating(2.0), kSmooth, o);
  EXPECT_LT(r.diagnostics.relative_residual, 1e-9);
  EXPECT_NEAR(r.diagnostics.lambda, r.diagnostics.lambda0 - 1.0, 1e-15);
}

TEST(Perforated, AprioriBoundStableAcrossEps) {
  double lo = 1e300, hi = 0.0;
  for (double eps : {1.0 / 8, 1.0 / 16, 1.0 / 32, 1.0 / 64}) {
    const Mesh m = perforated_mesh(eps, 0.1);
    const auto r = solve_perforated(m, CoefficientSet::laplacian(2), NonlinearBC::saturating(2.0), kSmooth);
    const auto fl2 = norms(DiscreteField::interpolate(m, kSmooth)).l2;
    const double ratio = norms(r.u).h1 / fl2;
    lo = std::min(lo, ratio);
    hi = std::max(hi, ratio);
  }
  EXPECT_LT(hi / lo, 1.5);
}

TEST(Options, Rejected) {
  const Mesh m = perforated_mesh(0.25, 0.2);
  SolveOptions o;
  o.damping = 0.0;
  EXPECT_THROW(solve_perforated(m, CoefficientSet::laplacian(2), NonlinearBC::zero(), kOne, o), Error);
  o = {};
  o.lambda = 0.0;
  try {
    solve_perforated(m, CoefficientSet::laplacian(2), NonlinearBC::zero(), kOne, o);
    FAIL() << "lambda above the threshold accepted";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::lambda_out_of_range);
  }
}

TEST(Plain, ZeroAndClosedForm) {
  const SolveOptions o = strip_options();
  const auto zero = solve_homogenized_plain(strip(16), CoefficientSet::laplacian(2), [](const Vec3&) {
    return Complex(0.0);
  }, o);
  EXPECT_EQ(zero.u.values.norm(), 0.0);
  std::vector<double> err;
  for (int n : {16, 32, 64}) {
    const Mesh m = strip(n);
    const auto r = solve_homogenized_plain(m, CoefficientSet::laplacian(2), kOne, o);
    err.push_back(nodal_error(r.u, [](double t) { return 1.0 - std::cosh(t) / std::cosh(1.0); }));
  }
  EXPECT_LT(err[0], 2e-3);
  EXPECT_GT(err[0] / err[1], 3.5);
  EXPECT_GT(err[1] / err[2], 3.5);
}

TEST(Plain, Linearity) {
  const Mesh m = perforated_mesh(0.125);
  SolveOptions o;
  o.linear_tol = 1e-13;
  const ScalarField f2 = [](const Vec3& x) { return Complex(std::cos(2 * x[0]), 1.0); };
  const auto a = solve_homogenized_plain(m, CoefficientSet::laplacian(2), kSmooth, o);
  const auto b = solve_homogenized_plain(m, CoefficientSet::laplacian(2), f2, o);
  const auto c = solve_homogenized_plain(m, CoefficientSet::laplacian(2),
                                         [&](const Vec3& x) { return kSmooth(x) + f2(x); }, o);
  EXPECT_LE(norms(m, c.u.values - a.u.values - b.u.values).h1, 1e-10 * norms(c.u).h1);
}

TEST(Delta, ZeroDensityMatchesPlain) {
  const SolveOptions o = strip_options();
  const Mesh m = strip(32);
  const auto plain = solve_homogenized_plain(m, CoefficientSet::laplacian(2), kOne, o);
  const auto delta = solve_homogenized_delta(m, CoefficientSet::laplacian(2), SurfaceDensity::zero(),
                                             NonlinearBC::linear(2.0), kOne, o);
  EXPECT_LE((plain.u.values - delta.u.values).norm(), 1e-11 * plain.u.values.norm());
  // Without interface facets the mesh has the same nodes and simplices.
  const Mesh bare = strip(32, false);
  const auto no_iface = solve_homogenized_plain(bare, CoefficientSet::laplacian(2), kOne, o);
  EXPECT_LE((plain.u.values - no_iface.u.values).norm(), 1e-11 * plain.u.values.norm());
}

TEST(Delta, TransmissionOracle) {
  const SolveOptions o = strip_options();
  const double c = 1.0, sigma = 2.0;
  std::vector<double> err;
  for (int n : {16, 32, 64}) {
    const Mesh m = strip(n);
    const auto r = solve_homogenized_delta(m, CoefficientSet::laplacian(2), SurfaceDensity::constant(c),
                                           NonlinearBC::linear(sigma), kOne, o);
    err.push_back(nodal_error(r.u, [&](double t) { return transmission_exact(t, c * sigma); }));
  }
  EXPECT_LT(err[0], 2e-3);
  EXPECT_GT(err[0] / err[1], 3.5);
  EXPECT_GT(err[1] / err[2], 3.5);
  EXPECT_NEAR(transmission_exact(0.0, 2.0), 0.199788, 1e-6);
}

TEST(Delta, LargerDensityLowersCentreValue) {
  const SolveOptions o = strip_options();
  const Mesh m = strip(32);
  double prev = 1e9;
  for (double c : {0.0, 0.5, 1.0, 4.0}) {
    const auto r = solve_homogenized_delta(m, CoefficientSet::laplacian(2), SurfaceDensity::constant(c),
                                           NonlinearBC::saturating(2.0), kOne, o);
    const double u0 = std::abs(r.u.evaluate(Vec3(0.05, 0.0, 0.0)));
    EXPECT_LT(u0, prev);
    prev = u0;
  }
}

TEST(Delta, SaturatingPicardContractsAndIsUnique) {
  const Mesh m = mesh_interface(perfhom::testing::unit_box(2), 0.0, 1.0 / 16);
  SolveOptions o;
  o.newton = false;
  o.picard_tol = 1e-11;
  const auto a = NonlinearBC::saturating(Complex(2.0, 0.5));
  const auto r1 = solve_homogenized_delta(m, CoefficientSet::laplacian(2), SurfaceDensity::constant(1.57), a,
                                          kSmooth, o);
  for (double q : r1.diagnostics.contraction_ratios) EXPECT_LT(q, 1.0);
  o.initial_guess = CVector::Constant(static_cast<Eigen::Index>(m.num_vertices()), Complex(-4.0, 2.0));
  const auto r2 = solve_homogenized_delta(m, CoefficientSet::laplacian(2), SurfaceDensity::constant(1.57), a,
                                          kSmooth, o);
  EXPECT_LE(norms(m, r1.u.values - r2.u.values).h1, 10 * o.picard_tol * norms(r1.u).h1);
}
