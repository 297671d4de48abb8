#include "fem_internal.hpp"

#include "perfhom/error.hpp"

#include <cmath>
#include <numeric>

namespace perfhom {

namespace {

using CTriplet = Eigen::Triplet<Complex>;
using RTriplet = Eigen::Triplet<double>;

/// Degree-3 rules on the reference facet, barycentric coordinates and weights summing to 1.
struct FacetRule {
  std::vector<std::array<double, 3>> bary;
  std::vector<double> w;
};

FacetRule facet_rule(int dim) {
  FacetRule r;
  if (dim == 2) {
    const double g = 0.5 / std::sqrt(3.0);
    r.bary = {{0.5 + g, 0.5 - g, 0.0}, {0.5 - g, 0.5 + g, 0.0}};
    r.w = {0.5, 0.5};
  } else {
    const double a = 0.659027622374092, b = 0.231933368553031, c = 0.109039009072877;
    r.bary = {{a, b, c}, {a, c, b}, {b, a, c}, {b, c, a}, {c, a, b}, {c, b, a}};
    r.w.assign(6, 1.0 / 6.0);
  }
  return r;
}

}  // namespace

DiscreteField::DiscreteField(const Mesh& m, CVector v) : mesh(&m), values(std::move(v)) {
  if (static_cast<std::size_t>(values.size()) != m.num_vertices()) {
    throw Error(ErrorCode::inconsistent_mesh, "field length differs from the node count");
  }
}

DiscreteField DiscreteField::zeros(const Mesh& m) {
  return DiscreteField(m, CVector::Zero(static_cast<Eigen::Index>(m.num_vertices())));
}

DiscreteField DiscreteField::interpolate(const Mesh& m, const ScalarField& f) {
  CVector v(static_cast<Eigen::Index>(m.num_vertices()));
  for (std::size_t i = 0; i < m.num_vertices(); ++i) v[static_cast<Eigen::Index>(i)] = f(m.vertices[i]);
  return DiscreteField(m, std::move(v));
}

Complex DiscreteField::evaluate(const Vec3& x) const {
  if (mesh == nullptr) throw Error(ErrorCode::invalid_argument, "field without mesh");
  const PointLocator loc(*mesh);
  const auto hit = loc.locate(x, 1e-9);
  if (!hit) throw Error(ErrorCode::point_off_manifold, "evaluation point outside the mesh");
  Complex s = 0.0;
  for (int i = 0; i <= mesh->dim; ++i) s += hit->bary[i] * values[mesh->simplices[hit->simplex][i]];
  return s;
}

double FacetQuadrature::total_weight() const { return std::accumulate(weights.begin(), weights.end(), 0.0); }

FacetQuadrature facet_quadrature(const Mesh& mesh, std::span<const std::size_t> facets, const RealField& density) {
  FacetQuadrature q;
  q.dim = mesh.dim;
  const FacetRule rule = facet_rule(mesh.dim);
  const std::size_t per = rule.w.size();
  q.points.reserve(per * facets.size());
  q.weights.reserve(per * facets.size());
  q.nodes.reserve(per * facets.size());
  q.basis.reserve(per * facets.size());
  for (std::size_t f : facets) {
    const auto& v = mesh.facets[f].v;
    const double meas = mesh.facet_measure(f);
    for (std::size_t k = 0; k < per; ++k) {
      Vec3 x = Vec3::Zero();
      for (int i = 0; i < mesh.dim; ++i) x += rule.bary[k][i] * mesh.vertices[v[i]];
      const double w = meas * rule.w[k] * (density ? density(x) : 1.0);
      q.points.push_back(x);
      q.weights.push_back(w);
      q.nodes.push_back(v);
      q.basis.push_back(rule.bary[k]);
    }
  }
  return q;
}

std::vector<std::size_t> tagged_facets(const Mesh& mesh, bool cavities) {
  auto out = cavities ? mesh.cavity_facets() : mesh.interface_facets();
  if (out.empty()) {
    throw Error(ErrorCode::missing_facet_tags,
                cavities ? "mesh has no cavity facets" : "mesh has no interface facets");
  }
  return out;
}

RSparse AssembledSystem::gram() const { return stiffness + mass; }

AssembledSystem assemble(const Mesh& mesh, const CoefficientSet& coeffs, const ScalarField& f) {
  if (mesh.dim != 2 && mesh.dim != 3) throw Error(ErrorCode::inconsistent_mesh, "mesh dimension must be 2 or 3");
  const CoefficientBounds bounds = check_coefficients(mesh, coeffs);
  const int d = mesh.dim;
  const int nloc = d + 1;
  const auto n = static_cast<Eigen::Index>(mesh.num_vertices());
  for (const auto& s : mesh.simplices) {
    for (int i = 0; i < nloc; ++i) {
      if (s[i] < 0 || s[i] >= n) throw Error(ErrorCode::inconsistent_mesh, "simplex references a missing vertex");
    }
  }
  const auto rule = detail::cell_rule(d);
  const double mass_scale = 1.0 / ((d + 1) * (d + 2));

  std::vector<CTriplet> kt;
  std::vector<RTriplet> mt;
  std::vector<RTriplet> st;
  const std::size_t nnz = mesh.num_simplices() * static_cast<std::size_t>(nloc * nloc);
  kt.reserve(nnz);
  mt.reserve(nnz);
  st.reserve(nnz);
  for (std::size_t e = 0; e < mesh.num_simplices(); ++e) {
    const auto& s = mesh.simplices[e];
    const detail::SimplexGeometry g = detail::simplex_geometry(mesh, e);
    if (!(g.volume > 0.0)) throw Error(ErrorCode::inconsistent_mesh, "degenerate simplex in mesh");
    Eigen::Matrix3d Abar = Eigen::Matrix3d::Zero();
    Eigen::Matrix<Complex, 4, 4> extra = Eigen::Matrix<Complex, 4, 4>::Zero();
    if (coeffs.A) {
      for (int q = 0; q < rule.n; ++q) Abar += rule.w[q] * coeffs.A(detail::map_point(mesh, e, rule.bary[q]));
    } else {
      Abar = coeffs.principal(Vec3::Zero());
    }
    if (coeffs.drift || coeffs.potential) {
      for (int q = 0; q < rule.n; ++q) {
        const Vec3 x = detail::map_point(mesh, e, rule.bary[q]);
        const double w = rule.w[q] * g.volume;
        const CVec3 b = coeffs.drift ? coeffs.drift(x) : CVec3::Zero();
        const Complex p = coeffs.potential ? coeffs.potential(x) : Complex(0.0);
        for (int i = 0; i < nloc; ++i) {
          for (int j = 0; j < nloc; ++j) {
            Complex val = p * rule.bary[q][j] * rule.bary[q][i];
            for (int k = 0; k < d; ++k) val += b[k] * g.grad(j, k) * rule.bary[q][i];
            extra(i, j) += w * val;
          }
        }
      }
    }
    for (int i = 0; i < nloc; ++i) {
      for (int j = 0; j < nloc; ++j) {
        const double lap = g.volume * g.grad.row(i).dot(g.grad.row(j));
        const double aij = g.volume * g.grad.row(i).dot(Abar * g.grad.row(j).transpose());
        const double mij = g.volume * mass_scale * (i == j ? 2.0 : 1.0);
        st.emplace_back(s[i], s[j], lap);
        mt.emplace_back(s[i], s[j], mij);
        kt.emplace_back(s[i], s[j], aij - coeffs.lambda * mij + extra(i, j));
      }
    }
  }
  AssembledSystem sys;
  sys.mesh = &mesh;
  sys.K.resize(n, n);
  sys.K.setFromTriplets(kt.begin(), kt.end());
  sys.mass.resize(n, n);
  sys.mass.setFromTriplets(mt.begin(), mt.end());
  sys.stiffness.resize(n, n);
  sys.stiffness.setFromTriplets(st.begin(), st.end());
  sys.load = f ? assemble_load(mesh, f) : CVector::Zero(n);
  sys.dirichlet = mesh.outer_vertex_mask();
  sys.real_valued = bounds.real_valued && sys.load.imag().isZero(0.0);
  return sys;
}

CVector assemble_load(const Mesh& mesh, const ScalarField& f) {
  const auto n = static_cast<Eigen::Index>(mesh.num_vertices());
  CVector b = CVector::Zero(n);
  if (!f) return b;
  const auto rule = detail::cell_rule(mesh.dim);
  for (std::size_t e = 0; e < mesh.num_simplices(); ++e) {
    const double vol = std::abs(mesh.simplex_volume(e));
    for (int q = 0; q < rule.n; ++q) {
      const Complex fx = f(detail::map_point(mesh, e, rule.bary[q]));
      for (int i = 0; i <= mesh.dim; ++i) b[mesh.simplices[e][i]] += vol * rule.w[q] * rule.bary[q][i] * fx;
    }
  }
  return b;
}

CSparse boundary_mass(const FacetQuadrature& quad, std::size_t n, const ScalarField& weight) {
  std::vector<CTriplet> t;
  const int d = quad.dim;
  t.reserve(quad.size() * static_cast<std::size_t>(d * d));
  for (std::size_t q = 0; q < quad.size(); ++q) {
    const Complex w = quad.weights[q] * (weight ? weight(quad.points[q]) : Complex(1.0));
    for (int i = 0; i < d; ++i) {
      for (int j = 0; j < d; ++j) t.emplace_back(quad.nodes[q][i], quad.nodes[q][j], w * quad.basis[q][i] * quad.basis[q][j]);
    }
  }
  CSparse M(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  M.setFromTriplets(t.begin(), t.end());
  return M;
}

NonlinearTerms boundary_nonlinear(const FacetQuadrature& quad, const NonlinearBC& nbc, const CVector& u,
                                  bool with_jacobian) {
  const Eigen::Index n = u.size();
  const int d = quad.dim;
  NonlinearTerms out;
  out.residual = CVector::Zero(n);
  out.jac_re.resize(n, n);
  out.jac_im.resize(n, n);
  if (nbc.kind == NonlinearKind::zero) return out;
  std::vector<CTriplet> tr;
  std::vector<CTriplet> ti;
  if (with_jacobian) {
    tr.reserve(quad.size() * static_cast<std::size_t>(d * d));
    ti.reserve(quad.size() * static_cast<std::size_t>(d * d));
  }
  for (std::size_t q = 0; q < quad.size(); ++q) {
    const auto& nodes = quad.nodes[q];
    const auto& phi = quad.basis[q];
    Complex uq = 0.0;
    for (int i = 0; i < d; ++i) {
      if (nodes[i] < 0 || nodes[i] >= n) throw Error(ErrorCode::inconsistent_mesh, "facet node outside the field");
      uq += phi[i] * u[nodes[i]];
    }
    const Vec3& x = quad.points[q];
    const double w = quad.weights[q];
    const Complex a = nbc.value(x, uq);
    for (int i = 0; i < d; ++i) out.residual[nodes[i]] += w * a * phi[i];
    if (!with_jacobian) continue;
    const auto [dre, dim] = nbc.derivatives(x, uq);
    for (int i = 0; i < d; ++i) {
      for (int j = 0; j < d; ++j) {
        const double pp = w * phi[i] * phi[j];
        tr.emplace_back(nodes[i], nodes[j], dre * pp);
        ti.emplace_back(nodes[i], nodes[j], dim * pp);
      }
    }
  }
  if (with_jacobian) {
    out.jac_re.setFromTriplets(tr.begin(), tr.end());
    out.jac_im.setFromTriplets(ti.begin(), ti.end());
  }
  return out;
}

}  // namespace perfhom
