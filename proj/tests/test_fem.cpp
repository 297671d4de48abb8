#include "perfhom/error.hpp"
#include "perfhom/fem.hpp"
#include "perfhom/mesh.hpp"
#include "support.hpp"

#include <unsupported/Eigen/SparseExtra>
#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

using namespace perfhom;
using perfhom::testing::disk_params;
using perfhom::testing::unit_box;
constexpr double kPi = std::numbers::pi;

namespace {

Mesh unit_square(int n) {
  std::vector<double> ax;
  for (int i = 0; i <= n; ++i) ax.push_back(static_cast<double>(i) / n);
  const std::vector<std::vector<double>> axes{ax, ax};
  return mesh_tensor(2, axes);
}

Mesh perforated_sample() {
  const auto layout = make_layout(LayoutKind::periodic, disk_params(), 0.25);
  MeshOptions o;
  o.h = 0.1;
  return mesh_perforated(layout, o);
}

CVector random_vector(std::size_t n, std::uint64_t seed, bool complex_values = true) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  CVector v(static_cast<Eigen::Index>(n));
  for (auto& x : v) x = Complex(g(rng), complex_values ? g(rng) : 0.0);
  return v;
}

CoefficientSet general_coefficients() {
  CoefficientSet c;
  c.dim = 2;
  c.A = [](const Vec3& x) {
    Eigen::Matrix3d a = Eigen::Matrix3d::Identity();
    a(0, 0) = 1.5 + 0.5 * std::sin(x[0]);
    a(0, 1) = a(1, 0) = 0.2;
    return a;
  };
  c.drift = [](const Vec3& x) { return CVec3(Complex(0.5, 0.3), Complex(std::cos(x[1]), -0.2), 0.0); };
  c.potential = [](const Vec3& x) { return Complex(1.0 + x[0], 0.5); };
  c.c0 = 0.75;
  return c;
}

}  // namespace

TEST(Assemble, LaplacianRowsSumToZero) {
  const Mesh m = unit_square(8);
  const auto sys = assemble(m, CoefficientSet::laplacian(2));
  const CSparse K = sys.K;
  const RSparse diff = (K.real() - sys.stiffness).pruned();
  EXPECT_EQ(diff.nonZeros(), 0);
  EXPECT_EQ(K.imag().norm(), 0.0);
  const RVector ones = RVector::Ones(static_cast<Eigen::Index>(m.num_vertices()));
  const RVector rows = sys.stiffness * ones;
  for (std::size_t i = 0; i < m.num_vertices(); ++i) EXPECT_NEAR(rows[static_cast<Eigen::Index>(i)], 0.0, 1e-13);
  EXPECT_TRUE(sys.real_valued);
}

TEST(Assemble, MassAndLoadSumToVolume) {
  const Mesh m = perforated_sample();
  const auto sys = assemble(m, CoefficientSet::laplacian(2), [](const Vec3&) { return Complex(1.0); });
  const double vol = m.total_volume();
  EXPECT_LT(vol, 1.0);
  EXPECT_NEAR(sys.mass.sum(), vol, 1e-12);
  EXPECT_NEAR(sys.load.sum().real(), vol, 1e-12);
  EXPECT_EQ(sys.load.sum().imag(), 0.0);
}

TEST(Assemble, LambdaShiftsByMass) {
  const Mesh m = unit_square(6);
  const auto a = assemble(m, CoefficientSet::laplacian(2, 0.0));
  const auto b = assemble(m, CoefficientSet::laplacian(2, -3.0));
  const CSparse d = b.K - a.K - Complex(3.0) * a.mass.cast<Complex>();
  EXPECT_LT(d.norm(), 1e-13);
}

TEST(Assemble, HermitianWithoutDrift) {
  const Mesh m = perforated_sample();
  CoefficientSet c = general_coefficients();
  c.drift = {};
  c.potential = [](const Vec3& x) { return Complex(2.0 + x[1], 0.0); };
  const auto sys = assemble(m, c);
  const CSparse adj = sys.K.adjoint();
  EXPECT_LE((sys.K - adj).norm(), 1e-12 * sys.K.norm());
}

TEST(Coefficients, ChecksEllipticityAndSymmetry) {
  const Mesh m = unit_square(4);
  CoefficientSet c = general_coefficients();
  const auto b = check_coefficients(m, c);
  EXPECT_GE(b.min_eigenvalue, c.c0);
  EXPECT_FALSE(b.real_valued);
  c.A = [](const Vec3&) {
    Eigen::Matrix3d a = Eigen::Matrix3d::Identity();
    a(0, 1) = 0.3;
    return a;
  };
  try {
    check_coefficients(m, c);
    FAIL() << "asymmetric A accepted";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::non_elliptic_coefficients);
  }
  c = general_coefficients();
  c.c0 = 2.5;
  EXPECT_THROW(check_coefficients(m, c), Error);
}

TEST(Nonlinear, ConditionsSampled) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> U(-2.0, 2.0);
  const auto sigma = [](const Vec3& x) { return Complex(1.0 + 0.5 * std::sin(3 * x[0]), 0.0); };
  for (const NonlinearBC& a : {NonlinearBC::linear(Complex(2.0, 0.5)), NonlinearBC::saturating(Complex(2.0)),
                               NonlinearBC::saturating(sigma, 1.5, 1.5)}) {
    for (int s = 0; s < 200; ++s) {
      const Vec3 x(U(rng), U(rng), 0.0);
      const Complex u(U(rng), U(rng)), v(U(rng), U(rng));
      EXPECT_EQ(a.value(x, 0.0), Complex(0.0));
      EXPECT_LE(std::abs(a.value(x, u) - a.value(x, v)), a.a0 * std::abs(u - v) * (1 + 1e-12));
      const double h = 1e-6;
      for (int i = 0; i < 2; ++i) {
        Vec3 xp = x;
        xp[i] += h;
        const double g = std::abs(a.value(xp, u) - a.value(x, u)) / h;
        EXPECT_LE(g, a.a1 * std::abs(u) * (1 + 1e-4) + 1e-8);
      }
    }
  }
}

TEST(Nonlinear, ZeroStateGivesZeroResidual) {
  const Mesh m = perforated_sample();
  const auto quad = facet_quadrature(m, tagged_facets(m, true));
  const CVector u = CVector::Zero(static_cast<Eigen::Index>(m.num_vertices()));
  const auto t = boundary_nonlinear(quad, NonlinearBC::saturating(Complex(2.0)), u);
  EXPECT_EQ(t.residual.norm(), 0.0);
}

TEST(Nonlinear, LinearResidualIsBoundaryMass) {
  const Mesh m = perforated_sample();
  const auto quad = facet_quadrature(m, tagged_facets(m, true));
  const CVector u = random_vector(m.num_vertices(), 5);
  const Complex sigma(1.7, -0.4);
  const auto t = boundary_nonlinear(quad, NonlinearBC::linear(sigma), u);
  const CVector ref = sigma * (boundary_mass(quad, m.num_vertices()) * u);
  EXPECT_LE((t.residual - ref).norm(), 1e-13 * ref.norm());
  // Boundary mass of the constant recovers the perimeter.
  const CVector ones = CVector::Ones(static_cast<Eigen::Index>(m.num_vertices()));
  double per = 0.0;
  for (auto f : m.cavity_facets()) per += m.facet_measure(f);
  EXPECT_NEAR(ones.dot(boundary_mass(quad, m.num_vertices()) * ones).real(), per, 1e-13);
}

TEST(Nonlinear, JacobianMatchesFiniteDifferences) {
  const Mesh m = perforated_sample();
  const auto quad = facet_quadrature(m, tagged_facets(m, true));
  const NonlinearBC a = NonlinearBC::saturating(Complex(2.0, 0.7));
  const CVector u = random_vector(m.num_vertices(), 7);
  const CVector dir = random_vector(m.num_vertices(), 8);
  const auto t = boundary_nonlinear(quad, a, u);
  const double step = 1e-5;
  for (int part = 0; part < 2; ++part) {
    const Complex unit = part == 0 ? Complex(1.0) : Complex(0.0, 1.0);
    const RVector d = part == 0 ? RVector(dir.real()) : RVector(dir.imag());
    const CVector up = u + unit * d.cast<Complex>() * step;
    const CVector um = u - unit * d.cast<Complex>() * step;
    const CVector fd = (boundary_nonlinear(quad, a, up, false).residual -
                        boundary_nonlinear(quad, a, um, false).residual) / (2 * step);
    const CSparse& J = part == 0 ? t.jac_re : t.jac_im;
    const CVector an = J * d.cast<Complex>();
    EXPECT_LE((fd - an).norm(), 1e-6 * an.norm()) << "part " << part;
  }
}

TEST(Nonlinear, DiscreteMonotonicityBound) {
  const Mesh m = perforated_sample();
  const auto quad = facet_quadrature(m, tagged_facets(m, true));
  const CSparse B = boundary_mass(quad, m.num_vertices());
  for (const NonlinearBC& a : {NonlinearBC::saturating(Complex(2.0)), NonlinearBC::saturating(Complex(-1.0, 1.0)),
                               NonlinearBC::linear(Complex(-0.5))}) {
    for (std::uint64_t s = 0; s < 20; ++s) {
      const CVector u = 3.0 * random_vector(m.num_vertices(), 100 + s);
      const CVector v = random_vector(m.num_vertices(), 200 + s);
      const CVector d = u - v;
      const double lhs =
          (boundary_nonlinear(quad, a, u, false).residual - boundary_nonlinear(quad, a, v, false).residual)
              .dot(d)
              .real();
      const double facet_l2 = d.dot(B * d).real();
      EXPECT_GE(lhs, -a.a0 * facet_l2 * (1 + 1e-12));
    }
  }
}

TEST(Linear, ZeroRhsGivesZero) {
  const Mesh m = perforated_sample();
  const auto sys = assemble(m, CoefficientSet::laplacian(2, -1.0));
  const auto u = solve_linear(sys, CVector::Zero(static_cast<Eigen::Index>(sys.size())));
  EXPECT_EQ(u.values.norm(), 0.0);
}

TEST(Linear, StripParabola) {
  for (int n : {8, 16}) {
    std::vector<double> x, y;
    for (int i = 0; i <= n; ++i) x.push_back(static_cast<double>(i) / n);
    for (int i = 0; i <= 2; ++i) y.push_back(0.125 * i);
    const std::vector<std::vector<double>> axes{x, y};
    const Mesh m = mesh_tensor(2, axes);
    AssembledSystem sys = assemble(m, CoefficientSet::laplacian(2), [](const Vec3&) { return Complex(1.0); });
    for (std::size_t i = 0; i < m.num_vertices(); ++i) {
      const double t = m.vertices[i][0];
      sys.dirichlet[i] = (t < 1e-14 || t > 1 - 1e-14) ? 1 : 0;
    }
    const auto u = solve_linear(sys, sys.load, 1e-13);
    double err = 0.0;
    for (std::size_t i = 0; i < m.num_vertices(); ++i) {
      const double t = m.vertices[i][0];
      err = std::max(err, std::abs(u.values[static_cast<Eigen::Index>(i)] - Complex(t * (1 - t) / 2)));
    }
    const double h = 1.0 / n;
    EXPECT_LE(err, 0.1 * h * h) << "n = " << n;
  }
}

TEST(Linear, ResidualContract) {
  const Mesh m = perforated_sample();
  CoefficientSet c = general_coefficients();
  c.lambda = -3.0;
  const auto sys = assemble(m, c, [](const Vec3& x) { return Complex(1 + x[0], x[1]); });
  for (LinearMethod method : {LinearMethod::krylov, LinearMethod::direct, LinearMethod::automatic}) {
    LinearSolveInfo info;
    const double tol = 1e-10;
    const auto u = solve_linear(sys, sys.load, tol, method, &info);
    const CVector r = sys.K * u.values - sys.load;
    double rn = 0.0, bn = 0.0;
    for (Eigen::Index i = 0; i < r.size(); ++i) {
      if (sys.dirichlet[static_cast<std::size_t>(i)]) {
        EXPECT_EQ(u.values[i], Complex(0.0));
        continue;
      }
      rn += std::norm(r[i]);
      bn += std::norm(sys.load[i]);
    }
    EXPECT_LE(std::sqrt(rn), 10 * tol * std::sqrt(bn));
  }
}

TEST(Lambda0, FormulaExamples) {
  const Mesh m = unit_square(4);
  const auto base = estimate_lambda0(CoefficientSet::laplacian(2), NonlinearBC::zero(), {}, &m);
  EXPECT_NEAR(base.lambda0, -0.25, 1e-15);
  EXPECT_EQ(base.C1, 0.0);
  EXPECT_EQ(base.C2, 0.0);
  CoefficientSet c = CoefficientSet::laplacian(2);
  c.potential = [](const Vec3&) { return Complex(2.0); };
  EXPECT_NEAR(estimate_lambda0(c, NonlinearBC::zero(), {}, &m).lambda0, base.lambda0 - 2.0, 1e-14);
  // Monotone a adds nothing; a non-monotone one pays C2 = 4 (a0 trace)^2 / c0.
  EXPECT_EQ(estimate_lambda0(CoefficientSet::laplacian(2), NonlinearBC::saturating(2.0), {}, &m).C2, 0.0);
  GeometryConstants g;
  g.trace = 1.5;
  EXPECT_NEAR(estimate_lambda0(CoefficientSet::laplacian(2), NonlinearBC::linear(-2.0), g, &m).C2, 36.0, 1e-12);
}

TEST(Lambda0, CoercivityAtDefaultShift) {
  const Mesh m = perforated_sample();
  CoefficientSet c = general_coefficients();
  const auto est = estimate_lambda0(c, NonlinearBC::zero(), {}, &m);
  c.lambda = est.lambda0 - 1.0;
  const auto sys = assemble(m, c);
  const auto rep = check_coercivity(sys, 100, 11);
  EXPECT_EQ(rep.samples, 100);
  EXPECT_GE(rep.min_sampled_ratio, c.c0 / 4);
  EXPECT_GE(rep.min_eigenvalue, c.c0 / 4);
  EXPECT_GE(rep.min_sampled_ratio, rep.min_eigenvalue * (1 - 1e-8));
}

TEST(Norms, ClosedForms) {
  const Mesh m = perforated_sample();
  const double V = m.total_volume();
  const CVector c = CVector::Constant(static_cast<Eigen::Index>(m.num_vertices()), Complex(3.0, -4.0));
  const Norms nc = norms(m, c);
  EXPECT_NEAR(nc.l2, 5.0 * std::sqrt(V), 1e-12);
  EXPECT_NEAR(nc.h1_semi, 0.0, 1e-12);
  const Mesh sq = unit_square(5);
  const auto x1 = DiscreteField::interpolate(sq, [](const Vec3& x) { return Complex(x[0]); });
  EXPECT_NEAR(norms(x1).h1_semi, 1.0, 1e-13);
  EXPECT_NEAR(norms(x1).l2, std::sqrt(1.0 / 3.0), 1e-13);
}

TEST(Norms, MatchDenseGram) {
  const Mesh m = perforated_sample();
  const auto sys = assemble(m, CoefficientSet::laplacian(2));
  const CVector u = random_vector(m.num_vertices(), 17);
  const Eigen::MatrixXd M(sys.mass), S(sys.stiffness);
  const double l2 = std::sqrt(u.dot(M.cast<Complex>() * u).real());
  const double semi = std::sqrt(u.dot(S.cast<Complex>() * u).real());
  const Norms n = norms(m, u);
  EXPECT_NEAR(n.l2, l2, 1e-12 * l2);
  EXPECT_NEAR(n.h1_semi, semi, 1e-12 * semi);
  EXPECT_NEAR(n.h1, std::hypot(l2, semi), 1e-12 * n.h1);
}

TEST(Norms, ManufacturedConvergenceRates) {
  const auto exact = [](const Vec3& x) { return Complex(std::sin(kPi * x[0]) * std::sin(kPi * x[1])); };
  const auto grad = [](const Vec3& x) {
    return CVec3(kPi * std::cos(kPi * x[0]) * std::sin(kPi * x[1]), kPi * std::sin(kPi * x[0]) * std::cos(kPi * x[1]),
                 0.0);
  };
  const auto f = [&](const Vec3& x) { return 2 * kPi * kPi * exact(x); };
  std::vector<double> l2, h1, hs;
  for (int n : {8, 16, 32, 64}) {
    const Mesh m = unit_square(n);
    const auto sys = assemble(m, CoefficientSet::laplacian(2), f);
    const auto u = solve_linear(sys, sys.load, 1e-13);
    const Norms e = error_norms(m, u.values, exact, grad);
    l2.push_back(e.l2);
    h1.push_back(e.h1);
    hs.push_back(1.0 / n);
  }
  const auto slope = [&](const std::vector<double>& e) {
    return std::log(e.front() / e.back()) / std::log(hs.front() / hs.back());
  };
  EXPECT_NEAR(slope(h1), 1.0, 0.15);
  EXPECT_NEAR(slope(l2), 2.0, 0.2);
}

TEST(Fields, EvaluateAndTransfer) {
  const Mesh a = unit_square(4);
  const Mesh b = unit_square(7);
  const auto lin = [](const Vec3& x) { return Complex(1 + 2 * x[0] - x[1], x[0]); };
  const auto fa = DiscreteField::interpolate(a, lin);
  const auto fb = transfer(fa, b);
  const auto ref = DiscreteField::interpolate(b, lin);
  EXPECT_LE((fb.values - ref.values).norm(), 1e-12);
  EXPECT_NEAR(std::abs(fa.evaluate(Vec3(0.3, 0.7, 0)) - lin(Vec3(0.3, 0.7, 0))), 0.0, 1e-13);
  try {
    (void)fa.evaluate(Vec3(1.5, 0.5, 0));
    FAIL() << "evaluation outside the mesh accepted";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::point_off_manifold);
  }
}

TEST(Io, MatrixMarketAndSolutionCsv) {
  const Mesh m = perforated_sample();
  CoefficientSet c = general_coefficients();
  const auto sys = assemble(m, c);
  const std::string dir = perfhom::testing::temp_dir("fem_io");
  write_matrix_market(sys.K, dir + "/K.mtx");
  CSparse back;
  ASSERT_TRUE(Eigen::loadMarket(back, dir + "/K.mtx"));
  EXPECT_LE((back - sys.K).norm(), 1e-15 * sys.K.norm());
  const auto u = DiscreteField::interpolate(m, [](const Vec3& x) { return Complex(x[0], x[1]); });
  write_solution_csv(u, dir + "/u.csv");
  std::ifstream is(dir + "/u.csv");
  std::string header;
  std::getline(is, header);
  EXPECT_EQ(header, "x1,x2,Re(u),Im(u)");
  std::size_t rows = 0;
  for (std::string line; std::getline(is, line);) rows += line.empty() ? 0 : 1;
  EXPECT_EQ(rows, m.num_vertices());
}
