#include "fem_internal.hpp"

#include "perfhom/error.hpp"

#include <unsupported/Eigen/SparseExtra>

#include <cmath>
#include <fstream>
#include <iomanip>

namespace perfhom {

Norms norms(const Mesh& mesh, const CVector& u, const std::vector<char>& mask) {
  if (static_cast<std::size_t>(u.size()) != mesh.num_vertices()) {
    throw Error(ErrorCode::inconsistent_mesh, "field length differs from the node count");
  }
  if (!mask.empty() && mask.size() != mesh.num_simplices()) {
    throw Error(ErrorCode::invalid_argument, "region mask length differs from the simplex count");
  }
  const int d = mesh.dim;
  const double scale = 1.0 / ((d + 1) * (d + 2));
  double l2 = 0.0;
  double semi = 0.0;
  for (std::size_t e = 0; e < mesh.num_simplices(); ++e) {
    if (!mask.empty() && !mask[e]) continue;
    const auto g = detail::simplex_geometry(mesh, e);
    const auto& s = mesh.simplices[e];
    // Exact P1 mass: vol / ((d+1)(d+2)) (sum |u_i|^2 + |sum u_i|^2).
    double sq = 0.0;
    Complex sum = 0.0;
    CVec3 grad = CVec3::Zero();
    for (int i = 0; i <= d; ++i) {
      const Complex ui = u[s[i]];
      sq += std::norm(ui);
      sum += ui;
      grad += ui * g.grad.row(i).transpose().cast<Complex>();
    }
    l2 += g.volume * scale * (sq + std::norm(sum));
    semi += g.volume * grad.squaredNorm();
  }
  Norms n;
  n.l2 = std::sqrt(l2);
  n.h1_semi = std::sqrt(semi);
  n.h1 = std::sqrt(l2 + semi);
  return n;
}

Norms norms(const DiscreteField& u, const std::vector<char>& mask) {
  if (u.mesh == nullptr) throw Error(ErrorCode::invalid_argument, "field without mesh");
  return norms(*u.mesh, u.values, mask);
}

Norms error_norms(const Mesh& mesh, const CVector& uh, const ScalarField& exact,
                  const std::function<CVec3(const Vec3&)>& exact_grad, const std::vector<char>& mask) {
  if (static_cast<std::size_t>(uh.size()) != mesh.num_vertices()) {
    throw Error(ErrorCode::inconsistent_mesh, "field length differs from the node count");
  }
  std::vector<std::array<double, 4>> bary;
  std::vector<double> w;
  if (mesh.dim == 2) {
    const double a1 = 0.445948490915965, w1 = 0.223381589678011;
    const double a2 = 0.091576213509771, w2 = 0.109951743655322;
    for (auto [a, wt] : {std::pair{a1, w1}, std::pair{a2, w2}}) {
      const double b = 1.0 - 2.0 * a;
      bary.push_back({a, a, b, 0});
      bary.push_back({a, b, a, 0});
      bary.push_back({b, a, a, 0});
      w.insert(w.end(), 3, wt);
    }
  } else {
    const auto r = detail::cell_rule(3);
    for (int q = 0; q < r.n; ++q) {
      bary.push_back(r.bary[q]);
      w.push_back(r.w[q]);
    }
  }
  double l2 = 0.0;
  double semi = 0.0;
  for (std::size_t e = 0; e < mesh.num_simplices(); ++e) {
    if (!mask.empty() && !mask[e]) continue;
    const auto g = detail::simplex_geometry(mesh, e);
    const auto& s = mesh.simplices[e];
    CVec3 grad = CVec3::Zero();
    for (int i = 0; i <= mesh.dim; ++i) grad += uh[s[i]] * g.grad.row(i).transpose().cast<Complex>();
    for (std::size_t q = 0; q < w.size(); ++q) {
      Complex val = 0.0;
      for (int i = 0; i <= mesh.dim; ++i) val += bary[q][i] * uh[s[i]];
      const Vec3 x = detail::map_point(mesh, e, bary[q]);
      l2 += g.volume * w[q] * std::norm(val - exact(x));
      CVec3 d = grad - exact_grad(x);
      for (int k = mesh.dim; k < 3; ++k) d[k] = 0.0;
      semi += g.volume * w[q] * d.squaredNorm();
    }
  }
  Norms n;
  n.l2 = std::sqrt(l2);
  n.h1_semi = std::sqrt(semi);
  n.h1 = std::sqrt(l2 + semi);
  return n;
}

DiscreteField transfer(const DiscreteField& source, const Mesh& target, bool nested) {
  if (source.mesh == nullptr) throw Error(ErrorCode::invalid_argument, "field without mesh");
  const auto n = static_cast<Eigen::Index>(target.num_vertices());
  CVector v(n);
  if (nested) {
    if (source.values.size() < n) throw Error(ErrorCode::inconsistent_mesh, "nested transfer onto a larger mesh");
    v = source.values.head(n);
    return DiscreteField(target, std::move(v));
  }
  const PointLocator loc(*source.mesh);
  const auto& sm = *source.mesh;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vec3& x = target.vertices[static_cast<std::size_t>(i)];
    auto hit = loc.locate(x, 1e-9);
    if (!hit) hit = loc.locate(x, 1e-6);
    if (!hit) throw Error(ErrorCode::point_off_manifold, "target node outside the source mesh");
    Complex s = 0.0;
    for (int k = 0; k <= sm.dim; ++k) s += hit->bary[k] * source.values[sm.simplices[hit->simplex][k]];
    v[i] = s;
  }
  return DiscreteField(target, std::move(v));
}

void write_matrix_market(const CSparse& A, const std::string& path) {
  if (!Eigen::saveMarket(A, path)) throw Error(ErrorCode::io_failure, "cannot write " + path);
}

void write_solution_csv(const DiscreteField& u, const std::string& path) {
  if (u.mesh == nullptr) throw Error(ErrorCode::invalid_argument, "field without mesh");
  std::ofstream os(path);
  if (!os) throw Error(ErrorCode::io_failure, "cannot open " + path);
  const int d = u.mesh->dim;
  for (int i = 0; i < d; ++i) os << 'x' << (i + 1) << ',';
  os << "Re(u),Im(u)\n";
  os << std::setprecision(17);
  for (std::size_t k = 0; k < u.size(); ++k) {
    const Vec3& x = u.mesh->vertices[k];
    for (int i = 0; i < d; ++i) os << x[i] << ',';
    const Complex z = u.values[static_cast<Eigen::Index>(k)];
    os << z.real() << ',' << z.imag() << '\n';
  }
  if (!os) throw Error(ErrorCode::io_failure, "write to " + path + " failed");
}

}  // namespace perfhom
