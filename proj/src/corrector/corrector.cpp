#include "perfhom/corrector.hpp"

#include "perfhom/error.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <memory>
#include <numbers>

namespace perfhom {

namespace {

constexpr double two_pi = 2.0 * std::numbers::pi;

int tangential(int dim) { return dim - 1; }

std::size_t grid_points(int dim, int n) {
  std::size_t p = 1;
  for (int a = 0; a < tangential(dim); ++a) p *= static_cast<std::size_t>(n);
  return p;
}

double wrap(double t, double b) {
  const double r = std::fmod(t, b);
  return r < 0.0 ? r + b : r;
}

// In-place multidimensional FFT over `axes` axes of length n each, axis 0 slowest.
void fft_nd(std::vector<Complex>& a, int axes, int n, bool inverse) {
  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::Unscaled);
  std::vector<Complex> line(static_cast<std::size_t>(n));
  std::vector<Complex> out;
  const std::size_t nn = static_cast<std::size_t>(n);
  const std::size_t total = a.size();
  std::size_t stride = 1;
  for (int ax = axes - 1; ax >= 0; --ax) {
    for (std::size_t base = 0; base < total; ++base) {
      if ((base / stride) % nn != 0) continue;
      for (std::size_t i = 0; i < nn; ++i) line[i] = a[base + i * stride];
      if (inverse) {
        fft.inv(out, line);
      } else {
        fft.fwd(out, line);
      }
      for (std::size_t i = 0; i < nn; ++i) a[base + i * stride] = out[i];
    }
    stride *= nn;
  }
}

// Sample xi' of grid node `g` (optionally shifted by half a spacing).
Vec3 grid_xi(int dim, const std::array<double, 2>& b, int n, std::size_t g, bool shifted) {
  Vec3 xi = Vec3::Zero();
  const int t = tangential(dim);
  const double s = shifted ? 0.5 : 0.0;
  std::size_t rest = g;
  for (int a = t - 1; a >= 0; --a) {
    const auto idx = static_cast<double>(rest % static_cast<std::size_t>(n));
    rest /= static_cast<std::size_t>(n);
    xi[a] = b[static_cast<std::size_t>(a)] * (idx + s) / n;
  }
  return xi;
}

struct Mode {
  int m1 = 0;
  int m2 = 0;
  double k1 = 0.0;
  double k2 = 0.0;
  [[nodiscard]] double norm() const { return std::hypot(k1, k2); }
};

Mode mode_of(const FourierCorrector& c, std::size_t idx) {
  const auto per = static_cast<std::size_t>(c.modes_per_axis());
  Mode m;
  m.m1 = static_cast<int>(idx % per) - c.order;
  m.k1 = two_pi * m.m1 / c.periods[0];
  if (c.dim == 3) {
    m.m2 = static_cast<int>(idx / per) - c.order;
    m.k2 = two_pi * m.m2 / c.periods[1];
  }
  return m;
}

// sum_m gamma_m factor(m) exp(i k_m . xi') on the (shifted) sampling grid.
std::vector<double> synthesize(const FourierCorrector& c, const std::function<double(const Mode&)>& factor,
                               bool shifted) {
  const int n = c.grid;
  const int t = tangential(c.dim);
  std::vector<Complex> a(grid_points(c.dim, n), Complex(0.0, 0.0));
  for (std::size_t idx = 0; idx < c.gamma.size(); ++idx) {
    if (c.gamma[idx] == Complex(0.0, 0.0)) continue;
    const Mode m = mode_of(c, idx);
    Complex v = c.gamma[idx] * factor(m);
    if (shifted) {
      const double phase = std::numbers::pi * (m.m1 + (t == 2 ? m.m2 : 0)) / n;
      v *= std::polar(1.0, phase);
    }
    const std::size_t i1 = static_cast<std::size_t>((m.m1 % n + n) % n);
    const std::size_t pos = t == 1 ? i1 : i1 * static_cast<std::size_t>(n) + static_cast<std::size_t>((m.m2 % n + n) % n);
    a[pos] += v;
  }
  fft_nd(a, t, n, true);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i].real();
  return out;
}

double max_abs(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

BetaField make_beta(int dim, std::span<const double> periods, std::function<double(const Vec3&)> exact, int grid,
                    double mean_tol, double scale) {
  if (dim != 2 && dim != 3) throw Error(ErrorCode::invalid_argument, "beta field needs dimension 2 or 3");
  if (grid < 8 || grid % 2 != 0) throw Error(ErrorCode::invalid_argument, "beta grid must be even and >= 8");
  if (periods.size() < static_cast<std::size_t>(tangential(dim))) {
    throw Error(ErrorCode::invalid_argument, "one cell period per tangential axis is required");
  }
  BetaField f;
  f.dim = dim;
  for (int a = 0; a < tangential(dim); ++a) {
    if (!(periods[static_cast<std::size_t>(a)] > 0.0)) throw Error(ErrorCode::invalid_argument, "cell periods must be positive");
    f.periods[static_cast<std::size_t>(a)] = periods[static_cast<std::size_t>(a)];
  }
  f.grid = grid;
  f.exact = std::move(exact);
  f.values.resize(grid_points(dim, grid));
  double sum = 0.0;
  for (std::size_t g = 0; g < f.values.size(); ++g) {
    f.values[g] = f.exact(grid_xi(dim, f.periods, grid, g, false));
    sum += f.values[g];
    f.sup = std::max(f.sup, std::abs(f.values[g]));
  }
  f.mean = sum / static_cast<double>(f.values.size());
  if (std::abs(f.mean) > mean_tol * std::max(1.0, scale)) {
    throw Error(ErrorCode::nonzero_mean, "cell average of beta is " + std::to_string(f.mean) +
                                             "; layout and alpha^0 are inconsistent");
  }
  return f;
}

}  // namespace

BetaField beta_field(const PerforationLayout& layout, std::span<const double> periods, const Mollifier& mollifier,
                     const SurfaceDensity& alpha0, int grid, double mean_tol) {
  if (!alpha0.is_constant()) throw Error(ErrorCode::invalid_argument, "the flat periodic corrector needs a constant alpha^0");
  const int t = tangential(layout.dim);
  if (periods.size() < static_cast<std::size_t>(t)) {
    throw Error(ErrorCode::invalid_argument, "one cell period per tangential axis is required");
  }
  // The cell nearest the middle of S, away from cavities dropped near the outer boundary.
  Vec3 anchor = layout.domain.lo;
  anchor[t] = layout.s0;
  Vec3 cell = anchor;
  for (int a = 0; a < t; ++a) {
    const double len = layout.eps * periods[static_cast<std::size_t>(a)];
    const double j = std::floor(0.5 * layout.domain.extent(a) / len);
    if (j < 1.0 || (j + 2.0) * len > layout.domain.extent(a) + 1e-12) {
      throw Error(ErrorCode::invalid_argument, "the domain holds fewer than three cells along S");
    }
    cell[a] += j * len;
  }
  const SurfaceDensity a_eps = alpha_eps_density(layout, mollifier);
  const double a0 = alpha0(cell);
  const double eps = layout.eps;
  std::array<double, 2> b{periods[0], t == 2 ? periods[1] : 1.0};
  auto exact = [a_eps, a0, eps, b, cell, t](const Vec3& xi) {
    Vec3 x = cell;
    for (int a = 0; a < t; ++a) x[a] += eps * wrap(xi[a], b[static_cast<std::size_t>(a)]);
    return a_eps(x) - a0;
  };
  BetaField f = make_beta(layout.dim, periods, exact, grid, mean_tol, std::abs(a0));
  f.anchor = anchor;
  return f;
}

BetaField beta_from_function(int dim, std::span<const double> periods, const std::function<double(const Vec3&)>& beta,
                             int grid, double mean_tol) {
  if (!beta) throw Error(ErrorCode::invalid_argument, "empty beta function");
  std::array<double, 2> b{periods.empty() ? 1.0 : periods[0], periods.size() > 1 ? periods[1] : 1.0};
  const int t = tangential(dim);
  auto wrapped = [beta, b, t](const Vec3& xi) {
    Vec3 y = xi;
    for (int a = 0; a < t; ++a) y[a] = wrap(xi[a], b[static_cast<std::size_t>(a)]);
    return beta(y);
  };
  return make_beta(dim, periods, wrapped, grid, mean_tol, 1.0);
}

Complex FourierCorrector::coefficient(int m1, int m2) const {
  if (std::abs(m1) > order || std::abs(m2) > order || (dim == 2 && m2 != 0)) return {0.0, 0.0};
  const int per = modes_per_axis();
  const int idx = (m1 + order) + (dim == 3 ? per * (m2 + order) : 0);
  return gamma[static_cast<std::size_t>(idx)];
}

namespace {

struct PointEval {
  double value = 0.0;
  Vec3 grad = Vec3::Zero();
  double lap = 0.0;
};

PointEval evaluate(const FourierCorrector& c, const Vec3& xi) {
  const int t = tangential(c.dim);
  const double xn = xi[t];
  PointEval r;
  double d2t = 0.0;
  double d2n = 0.0;
  for (std::size_t idx = 0; idx < c.gamma.size(); ++idx) {
    const Complex g = c.gamma[idx];
    if (g == Complex(0.0, 0.0)) continue;
    const Mode m = mode_of(c, idx);
    const double lam = m.norm();
    const double phase = m.k1 * xi[0] + (t == 2 ? m.k2 * xi[1] : 0.0);
    const Complex term = g * std::polar(std::exp(-lam * xn), phase);
    const Complex iterm = Complex(0.0, 1.0) * term;
    r.value += term.real();
    r.grad[0] += m.k1 * iterm.real();
    if (t == 2) r.grad[1] += m.k2 * iterm.real();
    r.grad[t] += -lam * term.real();
    d2t += -(m.k1 * m.k1 + m.k2 * m.k2) * term.real();
    d2n += lam * lam * term.real();
  }
  r.lap = d2t + d2n;
  return r;
}

}  // namespace

double FourierCorrector::value(const Vec3& xi) const { return evaluate(*this, xi).value; }
Vec3 FourierCorrector::gradient(const Vec3& xi) const { return evaluate(*this, xi).grad; }
double FourierCorrector::laplacian(const Vec3& xi) const { return evaluate(*this, xi).lap; }

double FourierCorrector::gamma_l1() const {
  double s = 0.0;
  for (const Complex& g : gamma) s += std::abs(g);
  return s;
}

double FourierCorrector::k_min() const {
  double k = two_pi / periods[0];
  if (dim == 3) k = std::min(k, two_pi / periods[1]);
  return k;
}

FourierCorrector fourier_corrector(const BetaField& beta, int order, double tol) {
  if (order < 1 || 2 * order >= beta.grid) {
    throw Error(ErrorCode::invalid_argument, "truncation order must satisfy 1 <= K < grid / 2");
  }
  if (beta.values.size() != grid_points(beta.dim, beta.grid)) {
    throw Error(ErrorCode::invalid_argument, "beta samples do not match the grid");
  }
  FourierCorrector c;
  c.dim = beta.dim;
  c.periods = beta.periods;
  c.order = order;
  c.grid = beta.grid;
  c.anchor = beta.anchor;
  const int t = tangential(beta.dim);
  const int n = beta.grid;
  std::vector<Complex> a(beta.values.begin(), beta.values.end());
  fft_nd(a, t, n, false);
  const double norm = 1.0 / static_cast<double>(a.size());
  const int per = c.modes_per_axis();
  c.gamma.assign(static_cast<std::size_t>(t == 2 ? per * per : per), Complex(0.0, 0.0));
  for (std::size_t idx = 0; idx < c.gamma.size(); ++idx) {
    const Mode m = mode_of(c, idx);
    if (m.m1 == 0 && m.m2 == 0) continue;
    const std::size_t i1 = static_cast<std::size_t>((m.m1 % n + n) % n);
    const std::size_t pos = t == 1 ? i1 : i1 * static_cast<std::size_t>(n) + static_cast<std::size_t>((m.m2 % n + n) % n);
    c.gamma[idx] = a[pos] * norm / m.norm();
  }
  // Neumann datum checked against the exact beta between the sampling nodes.
  const std::vector<double> dn = synthesize(c, [](const Mode& m) { return -m.norm(); }, true);
  double res = 0.0;
  for (std::size_t g = 0; g < dn.size(); ++g) {
    res = std::max(res, std::abs(dn[g] + beta.exact(grid_xi(beta.dim, beta.periods, n, g, true))));
  }
  c.boundary_residual = res;
  if (res > tol * std::max(beta.sup, 1e-300)) {
    throw Error(ErrorCode::truncation_insufficient,
                "boundary residual " + std::to_string(res) + " at order " + std::to_string(order));
  }
  return c;
}

CorrectorResidual corrector_residual_mu(const FourierCorrector& psi, const PerforationLayout& layout,
                                        const Mollifier& mollifier, const SurfaceDensity& alpha0) {
  if (layout.dim != psi.dim) throw Error(ErrorCode::invalid_argument, "corrector and layout dimensions differ");
  const int t = tangential(layout.dim);
  const double eps = layout.eps;
  const double height = layout.domain.hi[t] - layout.s0;
  if (!(height > 0.0)) throw Error(ErrorCode::invalid_argument, "no part of the domain lies above S");
  CorrectorResidual r;
  r.eps = eps;

  // Interior sup of Psi and its Laplacian over layers xi_n in [0, height / eps].
  const double xi_top = height / eps;
  std::vector<double> layers;
  const double bmin = t == 2 ? std::min(psi.periods[0], psi.periods[1]) : psi.periods[0];
  for (double s : {0.0, 0.02, 0.05, 0.1, 0.2, 0.35, 0.5, 1.0, 2.0, 4.0}) {
    if (s * bmin < xi_top) layers.push_back(s * bmin);
  }
  layers.push_back(xi_top);
  for (double xn : layers) {
    for (bool shifted : {false, true}) {
      const auto decay = [xn](const Mode& m) { return std::exp(-m.norm() * xn); };
      r.psi_sup = std::max(r.psi_sup, eps * max_abs(synthesize(psi, decay, shifted)));
      const auto d2t = synthesize(
          psi, [&](const Mode& m) { return -(m.k1 * m.k1 + m.k2 * m.k2) * decay(m); }, shifted);
      const auto d2n = synthesize(
          psi, [&](const Mode& m) { return m.norm() * m.norm() * decay(m); }, shifted);
      double lap = 0.0;
      for (std::size_t i = 0; i < d2t.size(); ++i) lap = std::max(lap, std::abs(d2t[i] + d2n[i]));
      r.lap_sup = std::max(r.lap_sup, lap / eps);
    }
  }

  // Normal derivative on the outer boundary above S: top face and the lateral faces.
  const auto top = synthesize(psi, [xi_top](const Mode& m) { return -m.norm() * std::exp(-m.norm() * xi_top); }, false);
  r.outer_flux = max_abs(top);
  const int lateral_samples = 64;
  for (int a = 0; a < t; ++a) {
    for (double face : {layout.domain.lo[a], layout.domain.hi[a]}) {
      for (double xn : layers) {
        for (int s = 0; s < (t == 2 ? lateral_samples : 1); ++s) {
          Vec3 xi = Vec3::Zero();
          xi[a] = (face - psi.anchor[a]) / eps;
          if (t == 2) {
            const int o = 1 - a;
            xi[o] = psi.periods[static_cast<std::size_t>(o)] * (s + 0.5) / lateral_samples;
          }
          xi[t] = xn;
          r.outer_flux = std::max(r.outer_flux, std::abs(psi.gradient(xi)[a]));
        }
      }
    }
  }

  // dPsi^eps/dtau + alpha^eps - alpha^0 on S, against the layout's own alpha^eps.
  const SurfaceDensity a_eps = alpha_eps_density(layout, mollifier);
  const auto dn = synthesize(psi, [](const Mode& m) { return -m.norm(); }, true);
  std::array<int, 2> cells{1, 1};
  double total_cells = 1.0;
  for (int a = 0; a < t; ++a) {
    cells[static_cast<std::size_t>(a)] = static_cast<int>(
        std::ceil((layout.domain.hi[a] - psi.anchor[a]) / (eps * psi.periods[static_cast<std::size_t>(a)]) - 1e-9));
    total_cells *= cells[static_cast<std::size_t>(a)];
  }
  const double budget = 4e5;
  const auto stride = static_cast<std::size_t>(
      std::max(1.0, std::ceil(std::pow(total_cells * static_cast<double>(dn.size()) / budget, 1.0 / t))));
  const auto n = static_cast<std::size_t>(psi.grid);
  for (int j1 = 0; j1 < cells[0]; ++j1) {
    for (int j2 = 0; j2 < cells[1]; ++j2) {
      for (std::size_t g = 0; g < dn.size(); ++g) {
        if ((g % n) % stride != 0 || (t == 2 && (g / n) % stride != 0)) continue;
        const Vec3 xi = grid_xi(layout.dim, psi.periods, psi.grid, g, true);
        Vec3 x = psi.anchor;
        x[t] = layout.s0;
        x[0] += eps * (psi.periods[0] * j1 + xi[0]);
        if (t == 2) x[1] += eps * (psi.periods[1] * j2 + xi[1]);
        bool inside = true;
        for (int a = 0; a < t; ++a) inside = inside && x[a] >= layout.domain.lo[a] && x[a] <= layout.domain.hi[a];
        if (!inside) continue;
        r.s_mismatch = std::max(r.s_mismatch, std::abs(dn[g] + a_eps(x) - alpha0(x)));
      }
    }
  }
  r.mu = r.psi_sup + r.lap_sup + r.outer_flux + r.s_mismatch;
  return r;
}

double kappa_bound(double mu, double c_cal) {
  if (mu < 0.0 || c_cal < 0.0) throw Error(ErrorCode::invalid_argument, "kappa bound needs mu >= 0 and c >= 0");
  return c_cal * std::sqrt(mu);
}

double calibrate_kappa(double mu0, double kappa0, double factor) {
  if (!(mu0 > 0.0) || kappa0 < 0.0 || !(factor > 0.0)) {
    throw Error(ErrorCode::invalid_argument, "calibration needs mu0 > 0, kappa0 >= 0, factor > 0");
  }
  return factor * kappa0 / std::sqrt(mu0);
}

void write_corrector_csv(std::span<const CorrectorResidual> rows, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorCode::io_failure, "cannot open " + path);
  os << "eps,psi_sup,lap_sup,outer_flux,s_mismatch,mu,kappa\n" << std::setprecision(17);
  for (const auto& r : rows) {
    os << r.eps << ',' << r.psi_sup << ',' << r.lap_sup << ',' << r.outer_flux << ',' << r.s_mismatch << ',' << r.mu
       << ',' << r.kappa << '\n';
  }
  if (!os) throw Error(ErrorCode::io_failure, "write to " + path + " failed");
}

}  // namespace perfhom
