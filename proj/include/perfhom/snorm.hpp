#pragma once

#include "perfhom/alpha.hpp"
#include "perfhom/fem.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace perfhom {

/// The slab S x (0, tau0/2) over the flat manifold, meshed with S as its
/// bottom face, with the H1 Gram matrix of -Laplace + 1 and the trace map.
struct SlabSpace {
  int dim = 2;
  double height = 0.5;
  double s0 = 0.0;
  Mesh mesh;
  RSparse gram;
  /// Mesh nodes on S, and the inverse map (-1 off S).
  std::vector<int> trace_nodes;
  std::vector<int> trace_index;
  std::vector<std::size_t> bottom_facets;
  std::shared_ptr<const void> factor;

  [[nodiscard]] std::size_t trace_size() const { return trace_nodes.size(); }
  /// Neumann-to-Dirichlet application: trace of G^{-1} E v.
  [[nodiscard]] RVector apply_ntd(const RVector& moments) const;
  /// Full solution G^{-1} E v.
  [[nodiscard]] RVector lift_moments(const RVector& moments) const;
  /// Boundary mass on S weighted by alpha, restricted to the trace nodes.
  [[nodiscard]] RSparse trace_mass(const SurfaceDensity& alpha) const;
  [[nodiscard]] double h1_norm_squared(const RVector& u) const;
};

struct SlabOptions {
  double tau0 = 1.0;
  /// Element size along S.
  double h_surface = 1.0 / 64;
  /// Growth of the normal spacing away from S and its cap.
  double growth = 1.15;
  double h_max = 0.05;
};

SlabSpace make_slab(const Box& domain, double s0, const SlabOptions& options);

/// -Laplace U + U = 0 in the slab, dU/dn = g on S (outward flux), zero flux elsewhere.
DiscreteField neumann_lift(const SlabSpace& slab, const SurfaceDensity& g);
/// -Laplace U + U = 0, U = phi on S, zero flux elsewhere.
DiscreteField dirichlet_extension(const SlabSpace& slab, const RealField& phi);

struct SNormOptions {
  double tol = 1e-8;
  int max_iterations = 400;
  int restarts = 3;
  std::uint64_t seed = 12345;
};

struct SNormResult {
  double value = 0.0;
  /// Top eigenvalue, value^2.
  double eigenvalue = 0.0;
  int iterations = 0;
  bool stalled = false;
};

/// sqrt of the largest ||U^N_{alpha phi}||^2 / ||U^D_phi||^2: the top eigenvalue of
/// phi <- N M_alpha N M_alpha phi (N the Neumann-to-Dirichlet map), found by a
/// restarted Lanczos iteration. max_iterations caps operator applications.
SNormResult s_norm(const SlabSpace& slab, const SurfaceDensity& alpha, const SNormOptions& options = {});

/// The discrete bilinear form (alpha u, v)_S for nodal trace vectors.
double trace_pairing(const SlabSpace& slab, const SurfaceDensity& alpha, const RVector& u, const RVector& v);

struct KappaRow {
  double eps = 0.0;
  double kappa = 0.0;
  bool stalled = false;
  int iterations = 0;
};

using LayoutFamily = std::function<PerforationLayout(double eps)>;

/// ||alpha^eps - alpha^0||_S per eps. The slab is resolved to eps R2 / 6 on S.
std::vector<KappaRow> kappa_table(const LayoutFamily& family, const SurfaceDensity& alpha0,
                                  std::span<const double> eps_list, const SlabOptions& base = {},
                                  const SNormOptions& options = {});

/// Rows "eps,kappa,stalled".
void write_kappa_csv(std::span<const KappaRow> rows, const std::string& path);

}  // namespace perfhom
