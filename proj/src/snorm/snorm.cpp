#include "perfhom/snorm.hpp"

#include "perfhom/error.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SparseCholesky>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <random>

namespace perfhom {

namespace {

using Factor = Eigen::SimplicialLDLT<RSparse>;

const Factor& factor_of(const SlabSpace& slab) {
  if (!slab.factor) throw Error(ErrorCode::invalid_argument, "slab space is not initialized");
  return *static_cast<const Factor*>(slab.factor.get());
}

std::vector<double> graded_axis(double a, double b, double h0, double growth, double hmax) {
  std::vector<double> t{a};
  double dt = h0;
  while (t.back() + dt < b - 0.5 * dt) {
    t.push_back(t.back() + dt);
    dt = std::min(dt * growth, std::max(hmax, h0));
  }
  t.push_back(b);
  return t;
}

std::vector<double> uniform_axis(double a, double b, double h) {
  const int n = std::max(1, static_cast<int>(std::ceil((b - a) / h - 1e-9)));
  std::vector<double> t(static_cast<std::size_t>(n) + 1);
  for (int i = 0; i <= n; ++i) t[static_cast<std::size_t>(i)] = a + (b - a) * i / n;
  return t;
}

}  // namespace

SlabSpace make_slab(const Box& domain, double s0, const SlabOptions& options) {
  if (!(options.tau0 > 0.0) || !(options.h_surface > 0.0) || !(options.growth >= 1.0) || !(options.h_max > 0.0)) {
    throw Error(ErrorCode::invalid_argument, "slab options need tau0 > 0, h > 0, growth >= 1");
  }
  SlabSpace slab;
  slab.dim = domain.dim;
  slab.height = 0.5 * options.tau0;
  slab.s0 = s0;
  const int n = domain.dim - 1;
  std::vector<std::vector<double>> axes;
  for (int a = 0; a < n; ++a) axes.push_back(uniform_axis(domain.lo[a], domain.hi[a], options.h_surface));
  axes.push_back(graded_axis(s0, s0 + slab.height, options.h_surface, options.growth, options.h_max));
  slab.mesh = mesh_tensor(domain.dim, axes);

  const AssembledSystem sys = assemble(slab.mesh, CoefficientSet::laplacian(domain.dim));
  slab.gram = sys.gram();
  auto f = std::make_shared<Factor>(slab.gram);
  if (f->info() != Eigen::Success) throw Error(ErrorCode::linear_solve_failure, "slab Gram factorization failed");
  slab.factor = f;

  const double tol = 1e-12 * std::max(1.0, std::abs(s0) + slab.height);
  slab.trace_index.assign(slab.mesh.num_vertices(), -1);
  for (std::size_t i = 0; i < slab.mesh.num_vertices(); ++i) {
    if (std::abs(slab.mesh.vertices[i][n] - s0) <= tol) {
      slab.trace_index[i] = static_cast<int>(slab.trace_nodes.size());
      slab.trace_nodes.push_back(static_cast<int>(i));
    }
  }
  for (std::size_t k = 0; k < slab.mesh.facets.size(); ++k) {
    const auto& fct = slab.mesh.facets[k];
    bool bottom = true;
    for (int i = 0; i < domain.dim; ++i) bottom = bottom && slab.trace_index[static_cast<std::size_t>(fct.v[i])] >= 0;
    if (bottom) slab.bottom_facets.push_back(k);
  }
  return slab;
}

RVector SlabSpace::lift_moments(const RVector& moments) const {
  RVector rhs = RVector::Zero(static_cast<Eigen::Index>(mesh.num_vertices()));
  for (std::size_t k = 0; k < trace_nodes.size(); ++k) rhs[trace_nodes[k]] = moments[static_cast<Eigen::Index>(k)];
  return factor_of(*this).solve(rhs);
}

RVector SlabSpace::apply_ntd(const RVector& moments) const {
  const RVector u = lift_moments(moments);
  RVector out(static_cast<Eigen::Index>(trace_nodes.size()));
  for (std::size_t k = 0; k < trace_nodes.size(); ++k) out[static_cast<Eigen::Index>(k)] = u[trace_nodes[k]];
  return out;
}

RSparse SlabSpace::trace_mass(const SurfaceDensity& alpha) const {
  const FacetQuadrature q = facet_quadrature(mesh, bottom_facets);
  const std::vector<double> a = alpha.facet_values(q);
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(q.size() * static_cast<std::size_t>(dim * dim));
  for (std::size_t p = 0; p < q.size(); ++p) {
    for (int i = 0; i < dim; ++i) {
      for (int j = 0; j < dim; ++j) {
        t.emplace_back(trace_index[static_cast<std::size_t>(q.nodes[p][i])],
                       trace_index[static_cast<std::size_t>(q.nodes[p][j])],
                       q.weights[p] * a[p] * q.basis[p][i] * q.basis[p][j]);
      }
    }
  }
  const auto m = static_cast<Eigen::Index>(trace_nodes.size());
  RSparse M(m, m);
  M.setFromTriplets(t.begin(), t.end());
  return M;
}

double SlabSpace::h1_norm_squared(const RVector& u) const { return u.dot(gram * u); }

DiscreteField neumann_lift(const SlabSpace& slab, const SurfaceDensity& g) {
  // Moments (g, psi_i)_S by quadrature of g itself.
  const FacetQuadrature q = facet_quadrature(slab.mesh, slab.bottom_facets);
  const std::vector<double> gv = g.facet_values(q);
  RVector moments = RVector::Zero(static_cast<Eigen::Index>(slab.trace_size()));
  for (std::size_t p = 0; p < q.size(); ++p) {
    for (int i = 0; i < slab.dim; ++i) {
      moments[slab.trace_index[static_cast<std::size_t>(q.nodes[p][i])]] += q.weights[p] * gv[p] * q.basis[p][i];
    }
  }
  const RVector u = slab.lift_moments(moments);
  return DiscreteField(slab.mesh, u.cast<Complex>());
}

DiscreteField dirichlet_extension(const SlabSpace& slab, const RealField& phi) {
  const auto n = static_cast<Eigen::Index>(slab.mesh.num_vertices());
  std::vector<char> mask(static_cast<std::size_t>(n), 0);
  CVector values = CVector::Zero(n);
  for (int node : slab.trace_nodes) {
    mask[static_cast<std::size_t>(node)] = 1;
    values[node] = phi(slab.mesh.vertices[static_cast<std::size_t>(node)]);
  }
  CSparse A = slab.gram.cast<Complex>();
  CVector b = CVector::Zero(n);
  apply_dirichlet(A, b, mask, &values);
  return DiscreteField(slab.mesh, solve_sparse(A, b, 1e-13, LinearMethod::direct));
}

SNormResult s_norm(const SlabSpace& slab, const SurfaceDensity& alpha, const SNormOptions& options) {
  if (!(options.tol > 0.0) || options.max_iterations < 1 || options.restarts < 1) {
    throw Error(ErrorCode::invalid_argument, "s_norm needs tol > 0 and positive iteration counts");
  }
  SNormResult best;
  const RSparse M = slab.trace_mass(alpha);
  if (M.norm() == 0.0) return best;
  const auto m = static_cast<Eigen::Index>(slab.trace_size());
  const int basis_cap = static_cast<int>(std::min<Eigen::Index>(60, m));
  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> normal;
  bool any_converged = false;

  // Lanczos for T = N M N M, self-adjoint in the N^{-1} inner product. Each basis
  // vector is kept as a pair (phi, w) with phi = N w, so <phi_a, phi_b> = phi_a^T w_b.
  for (int run = 0; run < options.restarts; ++run) {
    RVector w(m);
    for (Eigen::Index i = 0; i < m; ++i) w[i] = normal(rng);
    RVector phi = slab.apply_ntd(w);
    double mu = 0.0;
    bool converged = false;
    int applications = 0;
    while (!converged && applications < options.max_iterations) {
      const double nrm = std::sqrt(phi.dot(w));
      if (!(nrm > 0.0)) break;
      std::vector<RVector> P{phi / nrm};
      std::vector<RVector> W{w / nrm};
      Eigen::MatrixXd H = Eigen::MatrixXd::Zero(basis_cap, basis_cap);
      Eigen::VectorXd top;
      int k = 0;
      for (; k < basis_cap && applications < options.max_iterations; ++k) {
        RVector wn = M * slab.apply_ntd(M * P[static_cast<std::size_t>(k)]);
        RVector pn = slab.apply_ntd(wn);
        ++applications;
        for (int pass = 0; pass < 2; ++pass) {
          for (int i = 0; i <= k; ++i) {
            const double c = P[static_cast<std::size_t>(i)].dot(wn);
            H(i, k) += c;
            wn -= c * W[static_cast<std::size_t>(i)];
            pn -= c * P[static_cast<std::size_t>(i)];
          }
        }
        const double beta = std::sqrt(std::max(0.0, pn.dot(wn)));
        // Orthogonalization fills the upper triangle, including the off-diagonal beta.
        const Eigen::MatrixXd T = H.topLeftCorner(k + 1, k + 1).selfadjointView<Eigen::Upper>();
        const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T);
        mu = es.eigenvalues()[k];
        top = es.eigenvectors().col(k);
        // Ritz residual ||T x - theta x|| = beta |last component of the Ritz vector|.
        if (beta * std::abs(top[k]) <= options.tol * std::abs(mu) || beta <= 1e-14 * std::abs(mu)) {
          converged = true;
          ++k;
          break;
        }
        if (k + 1 < basis_cap) {
          P.push_back(pn / beta);
          W.push_back(wn / beta);
        }
      }
      // Restart from the leading Ritz vector.
      phi = RVector::Zero(m);
      w = RVector::Zero(m);
      for (int i = 0; i < static_cast<int>(top.size()) && i < static_cast<int>(P.size()); ++i) {
        phi += top[i] * P[static_cast<std::size_t>(i)];
        w += top[i] * W[static_cast<std::size_t>(i)];
      }
    }
    any_converged = any_converged || converged;
    if (run == 0 || mu > best.eigenvalue) {
      best.eigenvalue = std::max(mu, best.eigenvalue);
      best.iterations = applications;
    }
  }
  best.stalled = !any_converged;
  if (best.stalled) spdlog::warn("s_norm eigen-iteration stalled; returning the best Ritz value");
  best.value = std::sqrt(std::max(0.0, best.eigenvalue));
  return best;
}

double trace_pairing(const SlabSpace& slab, const SurfaceDensity& alpha, const RVector& u, const RVector& v) {
  return u.dot(slab.trace_mass(alpha) * v);
}

std::vector<KappaRow> kappa_table(const LayoutFamily& family, const SurfaceDensity& alpha0,
                                  std::span<const double> eps_list, const SlabOptions& base,
                                  const SNormOptions& options) {
  std::vector<KappaRow> rows;
  for (double eps : eps_list) {
    const PerforationLayout layout = family(eps);
    SlabOptions so = base;
    so.tau0 = layout.constants.tau0;
    so.h_surface = std::min(base.h_surface, eps * layout.constants.R2 / 6.0);
    const SlabSpace slab = make_slab(layout.domain, layout.s0, so);
    const SurfaceDensity beta = alpha_eps_density(layout, zeta(layout.dim)) - alpha0;
    const SNormResult r = s_norm(slab, beta, options);
    rows.push_back({eps, r.value, r.stalled, r.iterations});
    spdlog::info("kappa: eps = {:.5g}, ||alpha^eps - alpha^0||_S = {:.6g}{}", eps, r.value,
                 r.stalled ? " (stalled)" : "");
  }
  return rows;
}

void write_kappa_csv(std::span<const KappaRow> rows, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorCode::io_failure, "cannot open " + path);
  os << "eps,kappa,stalled\n" << std::setprecision(17);
  for (const auto& r : rows) os << r.eps << ',' << r.kappa << ',' << (r.stalled ? 1 : 0) << '\n';
  if (!os) throw Error(ErrorCode::io_failure, "write to " + path + " failed");
}

}  // namespace perfhom
