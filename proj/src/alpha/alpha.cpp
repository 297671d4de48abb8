#include "perfhom/alpha.hpp"

#include "perfhom/error.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <numeric>

namespace perfhom {

namespace {

double bump(double t) { return t < 1.0 ? std::exp(-1.0 / (1.0 - t * t)) : 0.0; }

/// Radial integral of bump(|t'|) over R^{m}: |S^{m-1}| int_0^1 r^{m-1} bump(r) dr.
double plane_integral_of_bump(int m) {
  using boost::math::quadrature::gauss_kronrod;
  auto f = [m](double r) { return std::pow(r, m - 1) * bump(r); };
  const double radial = gauss_kronrod<double, 61>::integrate(f, 0.0, 1.0, 15, 1e-15);
  const double sphere = m == 1 ? 2.0 : (m == 2 ? 2.0 * std::numbers::pi : 4.0 * std::numbers::pi);
  return sphere * radial;
}

/// Evaluator of the bump sum with centres sorted along the first tangential axis.
struct AlphaEvaluator {
  PerforationLayout layout;
  Mollifier mollifier;
  std::vector<Vec3> proj;
  std::vector<double> amp;
  std::vector<double> key;
  double radius = 0.0;

  AlphaEvaluator(const PerforationLayout& l, const Mollifier& m) : layout(l), mollifier(m) {
    const int n = l.dim;
    radius = l.eps * l.constants.R2;
    std::vector<std::size_t> order(l.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return l.centers[a][0] < l.centers[b][0]; });
    for (std::size_t k : order) {
      proj.push_back(l.projected_center(k));
      amp.push_back(std::pow(l.eta, n - 1) * l.shapes[k].boundary_measure / std::pow(l.constants.R2, n - 1));
      key.push_back(proj.back()[0]);
    }
  }

  double operator()(const Vec3& x) const {
    const PerforationLayout& l = layout;
    const int n = l.normal_axis();
    const double tol = 1e-9 * std::max(1.0, l.domain.extent(n));
    bool inside = std::abs(x[n] - l.s0) <= tol;
    for (int i = 0; i < n && inside; ++i) inside = x[i] >= l.domain.lo[i] - tol && x[i] <= l.domain.hi[i] + tol;
    if (!inside) throw Error(ErrorCode::point_off_manifold, "alpha^eps evaluated off S");
    auto it = std::lower_bound(key.begin(), key.end(), x[0] - radius);
    double s = 0.0;
    for (auto i = static_cast<std::size_t>(it - key.begin()); i < key.size() && key[i] <= x[0] + radius; ++i) {
      double d2 = 0.0;
      for (int a = 0; a < n; ++a) d2 += (x[a] - proj[i][a]) * (x[a] - proj[i][a]);
      const double t = std::sqrt(d2) / radius;
      if (t < 1.0) s += amp[i] * mollifier(t);
    }
    return s;
  }
};

}  // namespace

double Mollifier::operator()(double t) const { return c * bump(std::abs(t)); }

double Mollifier::plane_integral() const { return c * plane_integral_of_bump(dim - 1); }

Mollifier zeta(int dim) {
  if (dim != 2 && dim != 3) throw Error(ErrorCode::invalid_argument, "mollifier dimension must be 2 or 3");
  Mollifier m;
  m.dim = dim;
  m.c = 1.0 / plane_integral_of_bump(dim - 1);
  return m;
}

SurfaceDensity::SurfaceDensity(std::function<double(const Vec3&)> eval, double sup, std::string label)
    : eval_(std::move(eval)), sup_(sup), label_(std::move(label)) {}

SurfaceDensity SurfaceDensity::constant(double value) {
  SurfaceDensity d;
  d.value_ = value;
  d.sup_ = std::abs(value);
  d.label_ = "constant";
  return d;
}

std::vector<double> SurfaceDensity::sample(std::span<const Vec3> points) const {
  std::vector<double> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back((*this)(p));
  return out;
}

std::vector<double> SurfaceDensity::facet_values(const FacetQuadrature& quad) const { return sample(quad.points); }

RealField SurfaceDensity::as_field() const {
  SurfaceDensity copy = *this;
  return [copy](const Vec3& x) { return copy(x); };
}

SurfaceDensity operator-(const SurfaceDensity& a, const SurfaceDensity& b) { return a + (-1.0) * b; }

SurfaceDensity operator+(const SurfaceDensity& a, const SurfaceDensity& b) {
  if (a.is_constant() && b.is_constant()) return SurfaceDensity::constant(a.value_ + b.value_);
  return SurfaceDensity([a, b](const Vec3& x) { return a(x) + b(x); }, a.sup_ + b.sup_, a.label_ + "+" + b.label_);
}

SurfaceDensity operator*(double s, const SurfaceDensity& a) {
  if (a.is_constant()) return SurfaceDensity::constant(s * a.value_);
  return SurfaceDensity([s, a](const Vec3& x) { return s * a(x); }, std::abs(s) * a.sup_, a.label_);
}

double alpha_eps(const PerforationLayout& layout, const Mollifier& mollifier, const Vec3& x) {
  return AlphaEvaluator(layout, mollifier)(x);
}

SurfaceDensity alpha_eps_density(const PerforationLayout& layout, const Mollifier& mollifier) {
  if (mollifier.dim != layout.dim) throw Error(ErrorCode::invalid_argument, "mollifier and layout dimensions differ");
  auto ev = std::make_shared<const AlphaEvaluator>(layout, mollifier);
  double sup = 0.0;
  for (double a : ev->amp) sup = std::max(sup, a * mollifier.at_zero());
  return SurfaceDensity([ev](const Vec3& x) { return (*ev)(x); }, sup, "alpha_eps");
}

SurfaceDensity alpha0_flat_periodic(std::span<const double> periods, double unit_boundary_measure, double eta) {
  if (periods.empty()) throw Error(ErrorCode::invalid_argument, "at least one cell period is needed");
  double cell = 1.0;
  for (double b : periods) {
    if (!(b > 0.0)) throw Error(ErrorCode::invalid_argument, "cell periods must be positive");
    cell *= b;
  }
  if (unit_boundary_measure < 0.0 || !(eta > 0.0)) {
    throw Error(ErrorCode::invalid_argument, "boundary measure must be >= 0 and eta > 0");
  }
  const auto m = static_cast<double>(periods.size());
  return SurfaceDensity::constant(std::pow(eta, m) * unit_boundary_measure / cell);
}

int density_count(const PerforationLayout& layout, double R3) {
  if (!(R3 > 0.0)) throw Error(ErrorCode::invalid_argument, "R3 must be positive");
  if (layout.size() == 0) return 0;
  const int n = layout.normal_axis();
  const double spacing = 0.7 * R3 * 2.0;  // 7 R3 / 5
  std::array<int, 2> count{1, 1};
  for (int a = 0; a < n; ++a) {
    count[a] = 1 + static_cast<int>(std::ceil(layout.domain.extent(a) / spacing));
  }
  std::vector<Vec3> proj;
  for (std::size_t k = 0; k < layout.size(); ++k) proj.push_back(layout.projected_center(k));
  int best = 0;
  for (int i = 0; i < count[0]; ++i) {
    for (int j = 0; j < count[1]; ++j) {
      Vec3 L = Vec3::Zero();
      L[0] = layout.domain.lo[0] + spacing * i;
      if (n > 1) L[1] = layout.domain.lo[1] + spacing * j;
      int c = 0;
      for (const auto& p : proj) {
        double d2 = 0.0;
        for (int a = 0; a < n; ++a) d2 += (p[a] - L[a]) * (p[a] - L[a]);
        if (d2 < R3 * R3) ++c;
      }
      best = std::max(best, c);
    }
  }
  return best;
}

void write_alpha_csv(const SurfaceDensity& alpha, std::span<const Vec3> points, int dim, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorCode::io_failure, "cannot open " + path);
  os << (dim == 3 ? "s1,s2,alpha\n" : "s,alpha\n") << std::setprecision(17);
  for (const auto& p : points) {
    for (int a = 0; a + 1 < dim; ++a) os << p[a] << ',';
    os << alpha(p) << '\n';
  }
  if (!os) throw Error(ErrorCode::io_failure, "write to " + path + " failed");
}

}  // namespace perfhom
