#include "perfhom/harness.hpp"

#include "perfhom/error.hpp"

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <mutex>
#include <numbers>
#include <thread>

namespace perfhom {

using nlohmann::json;

namespace {

constexpr std::array<std::pair<TheoremTag, const char*>, 6> kTags{{{TheoremTag::T1a, "T1a"},
                                                                   {TheoremTag::T1b, "T1b"},
                                                                   {TheoremTag::T2, "T2"},
                                                                   {TheoremTag::T3a, "T3a"},
                                                                   {TheoremTag::T3b, "T3b"},
                                                                   {TheoremTag::T4, "T4"}}};

json vec_json(const Vec3& v, int dim) {
  json a = json::array();
  for (int i = 0; i < dim; ++i) a.push_back(v[i]);
  return a;
}

Vec3 vec_from(const json& j) {
  if (!j.is_array() || j.empty() || j.size() > 3) throw Error(ErrorCode::invalid_argument, "expected an array of 1..3 numbers");
  Vec3 v = Vec3::Zero();
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<int>(i)] = j[i].get<double>();
  return v;
}

json complex_json(Complex z) { return json::array({z.real(), z.imag()}); }

Complex complex_from(const json& j) {
  if (j.is_number()) return {j.get<double>(), 0.0};
  if (j.is_array() && j.size() == 2) return {j[0].get<double>(), j[1].get<double>()};
  throw Error(ErrorCode::invalid_argument, "expected a number or [re, im]");
}

std::string kind_name(NonlinearKind k) {
  switch (k) {
    case NonlinearKind::zero: return "zero";
    case NonlinearKind::linear: return "linear";
    case NonlinearKind::saturating: return "saturating";
  }
  return "zero";
}

NonlinearKind kind_from(const std::string& s) {
  if (s == "zero") return NonlinearKind::zero;
  if (s == "linear") return NonlinearKind::linear;
  if (s == "saturating") return NonlinearKind::saturating;
  throw Error(ErrorCode::invalid_argument, "unknown nonlinearity kind '" + s + "'");
}

json layout_params_json(LayoutKind kind, const LayoutParams& p) {
  json j = {{"kind", to_string(kind)},
            {"domain", p.domain},
            {"s0", p.s0},
            {"constants", p.constants},
            {"shape", p.shape},
            {"periods", {p.periods[0], p.periods[1]}},
            {"cell_offset", {p.cell_offset[0], p.cell_offset[1]}},
            {"normal_offset", p.normal_offset},
            {"perturbation", p.perturbation},
            {"size_perturbation", p.size_perturbation},
            {"cluster_beta", p.cluster_beta},
            {"cluster_extent", p.cluster_extent},
            {"cluster_pitch", p.cluster_pitch}};
  json cc = json::array();
  for (const auto& c : p.cluster_centers) cc.push_back(vec_json(c, p.dim));
  j["cluster_centers"] = cc;
  json cs = json::array();
  for (const auto& c : p.centers) cs.push_back(vec_json(c, p.dim));
  j["centers"] = cs;
  j["shapes"] = p.shapes;
  return j;
}

void layout_params_from(const json& j, LayoutKind& kind, LayoutParams& p) {
  if (j.contains("kind")) kind = layout_kind_from_string(j.at("kind").get<std::string>());
  if (j.contains("domain")) j.at("domain").get_to(p.domain);
  p.s0 = j.value("s0", p.s0);
  if (j.contains("constants")) j.at("constants").get_to(p.constants);
  if (j.contains("shape")) j.at("shape").get_to(p.shape);
  if (j.contains("periods")) {
    const auto& a = j.at("periods");
    p.periods[0] = a.at(0).get<double>();
    p.periods[1] = a.size() > 1 ? a.at(1).get<double>() : p.periods[1];
  }
  if (j.contains("cell_offset")) {
    const auto& a = j.at("cell_offset");
    p.cell_offset[0] = a.at(0).get<double>();
    p.cell_offset[1] = a.size() > 1 ? a.at(1).get<double>() : p.cell_offset[1];
  }
  p.normal_offset = j.value("normal_offset", p.normal_offset);
  p.perturbation = j.value("perturbation", p.perturbation);
  p.size_perturbation = j.value("size_perturbation", p.size_perturbation);
  p.cluster_beta = j.value("cluster_beta", p.cluster_beta);
  p.cluster_extent = j.value("cluster_extent", p.cluster_extent);
  p.cluster_pitch = j.value("cluster_pitch", p.cluster_pitch);
  if (j.contains("cluster_centers")) {
    p.cluster_centers.clear();
    for (const auto& c : j.at("cluster_centers")) p.cluster_centers.push_back(vec_from(c));
  }
  if (j.contains("centers")) {
    p.centers.clear();
    for (const auto& c : j.at("centers")) p.centers.push_back(vec_from(c));
  }
  if (j.contains("shapes")) j.at("shapes").get_to(p.shapes);
}

double smooth_cutoff(double d, double delta) {
  if (d <= delta) return 0.0;
  if (d >= 2.0 * delta) return 1.0;
  return 0.5 - 0.5 * std::cos(std::numbers::pi * (d - delta) / delta);
}

}  // namespace

std::string to_string(TheoremTag tag) {
  for (const auto& [t, name] : kTags) {
    if (t == tag) return name;
  }
  return "T2";
}

TheoremTag theorem_tag_from_string(const std::string& name) {
  for (const auto& [t, n] : kTags) {
    if (name == n) return t;
  }
  throw Error(ErrorCode::invalid_argument, "unknown theorem tag '" + name + "'");
}

bool uses_interface_limit(TheoremTag tag) { return tag == TheoremTag::T2 || tag == TheoremTag::T4; }

bool is_l2_tag(TheoremTag tag) { return tag == TheoremTag::T3a || tag == TheoremTag::T3b || tag == TheoremTag::T4; }

ScalarField RhsSpec::field(double s0, int dim) const {
  const int n = dim - 1;
  std::function<double(const Vec3&)> base;
  const double a = amplitude;
  if (kind == "constant") {
    base = [a](const Vec3&) { return a; };
  } else if (kind == "affine_sine") {
    base = [a, n](const Vec3& x) { return a * (1.0 + x[0] + std::sin(std::numbers::pi * x[n])); };
  } else if (kind == "gaussian") {
    if (!(width > 0.0)) throw Error(ErrorCode::invalid_argument, "gaussian width must be positive");
    const Vec3 c = center;
    const double w2 = width * width;
    base = [a, c, w2, dim](const Vec3& x) { return a * std::exp(-(x - c).head(dim).squaredNorm() / w2); };
  } else if (kind == "cosine") {
    const Vec3 k = wave;
    base = [a, k, dim](const Vec3& x) {
      double v = a;
      for (int i = 0; i < dim; ++i) v *= std::cos(std::numbers::pi * k[i] * x[i]);
      return v;
    };
  } else {
    throw Error(ErrorCode::invalid_argument, "unknown right-hand side kind '" + kind + "'");
  }
  if (vanish_delta < 0.0) throw Error(ErrorCode::invalid_argument, "vanish_delta must be >= 0");
  if (vanish_delta == 0.0) return [base](const Vec3& x) { return Complex(base(x), 0.0); };
  const double delta = vanish_delta;
  return [base, delta, s0, n](const Vec3& x) {
    return Complex(base(x) * smooth_cutoff(std::abs(x[n] - s0), delta), 0.0);
  };
}

CoefficientSet CoefficientSpec::build(int dim) const {
  CoefficientSet c = CoefficientSet::laplacian(dim);
  c.c0 = c0;
  if (A) {
    const Eigen::Matrix3d m = *A;
    c.A = [m](const Vec3&) { return m; };
  }
  if (!drift.isZero()) {
    const CVec3 d = drift.cast<Complex>();
    c.drift = [d](const Vec3&) { return d; };
  }
  if (potential != Complex(0.0, 0.0)) {
    const Complex p = potential;
    c.potential = [p](const Vec3&) { return p; };
  }
  return c;
}

NonlinearBC NonlinearitySpec::build() const {
  switch (kind) {
    case NonlinearKind::zero: return NonlinearBC::zero();
    case NonlinearKind::linear: return NonlinearBC::linear(sigma);
    case NonlinearKind::saturating: return NonlinearBC::saturating(sigma);
  }
  return NonlinearBC::zero();
}

MeshOptions MeshBudget::options(const PerforationLayout& layout, int level) const {
  if (!(h > 0.0) || cavity_segments < 4 || !(band_factor > 0.0) || !(grading > 0.0)) {
    throw Error(ErrorCode::invalid_argument, "mesh budget needs h > 0, >= 4 cavity segments, band_factor > 0");
  }
  const double s = std::ldexp(1.0, -level);
  MeshOptions o;
  o.h = h * s;
  o.min_cavity_segments = static_cast<int>(std::lround(cavity_segments / s));
  o.band_h = std::min(o.h, band_factor * layout.eps * s);
  o.grading = grading;
  // Cavity element size from the segment count; refine_factor is its ratio to h.
  double hc = o.h;
  if (layout.size() > 0) {
    const double girth = layout.dim == 2 ? layout.physical_boundary_measure(0)
                                         : 2.0 * std::numbers::pi * layout.cavity_scale() *
                                               layout.shapes[0].inscribed_radius();
    hc = girth / o.min_cavity_segments;
  }
  o.refine_factor = std::max(1.0, o.h / hc);
  return o;
}

StudyConfig StudyConfig::defaults(TheoremTag tag, int dim) {
  if (dim != 2 && dim != 3) throw Error(ErrorCode::invalid_argument, "dimension must be 2 or 3");
  StudyConfig c;
  c.tag = tag;
  c.dim = dim;
  c.layout.dim = dim;
  c.layout.domain.dim = dim;
  c.layout.domain.lo = Vec3::Zero();
  c.layout.domain.hi = Vec3::Ones();
  c.layout.domain.lo[dim - 1] = -0.5;
  c.layout.domain.hi[dim - 1] = 0.5;
  if (dim == 2) c.layout.domain.hi[2] = 0.0;
  c.layout.s0 = 0.0;
  c.layout.shape = Shape::ball(dim, 0.25);
  if (dim == 3) c.eps_list = {1.0 / 4, 1.0 / 6, 1.0 / 8};
  const bool vanishing = tag == TheoremTag::T1b || tag == TheoremTag::T3b;
  const bool zero_a = tag == TheoremTag::T1a || tag == TheoremTag::T3a;
  if (vanishing || tag == TheoremTag::T1a) c.eta = EtaRule{1.0, 0.5};
  if (!zero_a) c.nonlinearity = {NonlinearKind::saturating, Complex(2.0, 0.0)};
  RhsSpec r1;
  r1.kind = "affine_sine";
  RhsSpec r2;
  r2.kind = "gaussian";
  r2.center = Vec3(0.3, 0.2, 0.0);
  if (dim == 3) r2.center = Vec3(0.3, 0.6, 0.2);
  r2.width = 0.3;
  r2.amplitude = 2.0;
  RhsSpec r3;
  r3.kind = "cosine";
  r3.wave = Vec3(1.0, 1.0, 1.0);
  c.rhs = {r1, r2, r3};
  if (tag == TheoremTag::T3a) {
    for (auto& r : c.rhs) r.vanish_delta = 0.1;
  }
  switch (tag) {
    case TheoremTag::T1a: c.expected_window = std::array<double, 2>{0.8, 1.2}; break;
    case TheoremTag::T2: c.expected_window = std::array<double, 2>{0.35, 0.75}; break;
    default: break;
  }
  return c;
}

void StudyConfig::validate() const {
  if (dim != 2 && dim != 3) throw Error(ErrorCode::invalid_argument, "dimension must be 2 or 3");
  if (layout.dim != dim || layout.domain.dim != dim) {
    throw Error(ErrorCode::invalid_argument, "layout dimension differs from the study dimension");
  }
  if (eps_list.empty()) throw Error(ErrorCode::invalid_argument, "empty eps list");
  for (std::size_t i = 0; i < eps_list.size(); ++i) {
    if (!(eps_list[i] > 0.0)) throw Error(ErrorCode::invalid_argument, "eps values must be positive");
    if (i > 0 && !(eps_list[i] < eps_list[i - 1])) {
      throw Error(ErrorCode::invalid_argument, "eps list must be strictly decreasing");
    }
  }
  if (rhs.empty()) throw Error(ErrorCode::invalid_argument, "at least one right-hand side is required");
  const bool zero_a = nonlinearity.kind == NonlinearKind::zero || nonlinearity.sigma == Complex(0.0, 0.0);
  if ((tag == TheoremTag::T1a || tag == TheoremTag::T3a) && !zero_a) {
    throw Error(ErrorCode::tag_mismatch, to_string(tag) + " requires a = 0");
  }
  if ((tag == TheoremTag::T1b || tag == TheoremTag::T3b) && !(eta.exponent > 0.0)) {
    throw Error(ErrorCode::tag_mismatch, to_string(tag) + " requires eta(eps) -> 0 (positive exponent)");
  }
  if (uses_interface_limit(tag)) {
    if (eta.exponent != 0.0) throw Error(ErrorCode::tag_mismatch, to_string(tag) + " requires a constant eta");
    if (!alpha0 && layout_kind != LayoutKind::periodic && layout_kind != LayoutKind::perturbed_periodic) {
      throw Error(ErrorCode::tag_mismatch, to_string(tag) + " needs alpha0 for a non-periodic layout");
    }
  }
  if (expected_window && !((*expected_window)[0] < (*expected_window)[1])) {
    throw Error(ErrorCode::invalid_argument, "expected window must satisfy lo < hi");
  }
}

PerforationLayout StudyConfig::layout_at(double eps) const {
  LayoutParams p = layout;
  p.seed = seed;
  return make_layout(layout_kind, p, eps, eta);
}

SurfaceDensity StudyConfig::alpha0_density(double eps) const {
  if (alpha0) return SurfaceDensity::constant(*alpha0);
  const std::vector<double> b{layout.periods[0], layout.periods[1]};
  return alpha0_flat_periodic(std::span<const double>(b.data(), static_cast<std::size_t>(dim - 1)),
                              layout.shape.boundary_measure, eta(eps));
}

double predicted_bound(TheoremTag tag, double eps, double eta, int n, std::optional<double> kappa, const FNorms& f) {
  if (!(eps > 0.0) || !(eta > 0.0) || n < 2) throw Error(ErrorCode::invalid_argument, "bound needs eps, eta > 0 and n >= 2");
  if (f.omega < 0.0 || f.theta < 0.0) throw Error(ErrorCode::invalid_argument, "f norms must be >= 0");
  if (uses_interface_limit(tag) && (!kappa || *kappa < 0.0)) {
    throw Error(ErrorCode::tag_mismatch, to_string(tag) + " needs kappa(eps)");
  }
  const double nn = n;
  const double second = eps * eta + std::sqrt(eps) * std::pow(eta, nn / 2.0);
  switch (tag) {
    case TheoremTag::T1a: return second * f.omega;
    case TheoremTag::T1b: return (eps * eta + std::pow(eta, nn - 1.0)) * f.omega;
    case TheoremTag::T2: return (std::sqrt(eps) + *kappa) * f.omega;
    case TheoremTag::T3a: return (eps * eps * eta * eta + eps * std::pow(eta, nn)) * f.omega + second * f.theta;
    case TheoremTag::T3b: return (eps * eps * eta + std::pow(eta, nn - 1.0)) * f.omega + second * f.theta;
    case TheoremTag::T4: return (eps + *kappa) * f.omega + second * f.theta;
  }
  throw Error(ErrorCode::tag_mismatch, "unknown tag");
}

FitResult fit_rate(std::span<const std::pair<double, double>> pairs) {
  if (pairs.size() < 3) throw Error(ErrorCode::insufficient_points, "a rate fit needs at least 3 points");
  const double m = static_cast<double>(pairs.size());
  double sx = 0.0;
  double sy = 0.0;
  for (const auto& [e, v] : pairs) {
    if (!(e > 0.0) || !(v > 0.0)) throw Error(ErrorCode::invalid_argument, "rate fit needs positive values");
    sx += std::log(e);
    sy += std::log(v);
  }
  const double mx = sx / m;
  const double my = sy / m;
  double sxx = 0.0;
  double sxy = 0.0;
  for (const auto& [e, v] : pairs) {
    const double dx = std::log(e) - mx;
    sxx += dx * dx;
    sxy += dx * (std::log(v) - my);
  }
  if (!(sxx > 0.0)) throw Error(ErrorCode::insufficient_points, "rate fit needs distinct eps values");
  FitResult r;
  r.points = static_cast<int>(pairs.size());
  r.slope = sxy / sxx;
  r.intercept = my - r.slope * mx;
  double ss = 0.0;
  for (const auto& [e, v] : pairs) {
    const double res = std::log(v) - (r.intercept + r.slope * std::log(e));
    ss += res * res;
  }
  r.stderr_slope = pairs.size() > 2 ? std::sqrt(ss / (m - 2.0) / sxx) : 0.0;
  return r;
}

namespace {

struct LevelErrors {
  std::vector<double> l2;
  std::vector<double> h1;
  std::vector<double> f_omega;
  std::vector<double> f_perforated;
  std::vector<double> f_theta;
  std::size_t vertices = 0;
};

struct RowInput {
  double eps = 0.0;
  double kappa = 0.0;
};

LevelErrors solve_level(const StudyConfig& cfg, const PerforationLayout& layout, int level, double lambda) {
  const MeshOptions mo = cfg.mesh.options(layout, level);
  MeshOptions seeded = mo;
  seeded.seed = cfg.seed + static_cast<std::uint64_t>(level);
  const MeshPair mp = mesh_perforated_with_companion(layout, seeded);
  const CoefficientSet coeffs = cfg.coefficients.build(cfg.dim);
  const NonlinearBC nbc = cfg.nonlinearity.build();
  SolveOptions so;
  so.lambda = lambda;
  so.picard_tol = cfg.picard_tol;
  so.linear_tol = cfg.linear_tol;
  SolveOptions so_perf = so;
  so_perf.geometry = geometry_constants(layout);

  // Companion simplices inside cavities carry the theta^eps part of f.
  std::vector<char> in_cavity(mp.companion.num_simplices(), 0);
  for (std::size_t e = 0; e < in_cavity.size(); ++e) {
    in_cavity[e] = layout.cavity_containing(mp.companion.simplex_centroid(e)) >= 0 ? 1 : 0;
  }
  LevelErrors out;
  out.vertices = mp.perforated.num_vertices();
  for (const RhsSpec& spec : cfg.rhs) {
    const ScalarField f = spec.field(layout.s0, cfg.dim);
    const SolveResult ue = solve_perforated(mp.perforated, coeffs, nbc, f, so_perf);
    const SolveResult u0 = uses_interface_limit(cfg.tag)
                               ? solve_homogenized_delta(mp.companion, coeffs, cfg.alpha0_density(layout.eps), nbc, f, so)
                               : solve_homogenized_plain(mp.companion, coeffs, f, so);
    const DiscreteField u0p = transfer(u0.u, mp.perforated, mp.nested);
    const Norms n = norms(mp.perforated, ue.u.values - u0p.values);
    out.l2.push_back(n.l2);
    out.h1.push_back(n.h1);
    const DiscreteField fc = DiscreteField::interpolate(mp.companion, f);
    out.f_omega.push_back(norms(fc).l2);
    out.f_theta.push_back(norms(fc, in_cavity).l2);
    out.f_perforated.push_back(norms(DiscreteField::interpolate(mp.perforated, f)).l2);
  }
  return out;
}

double study_lambda(const StudyConfig& cfg) {
  if (cfg.lambda) return *cfg.lambda;
  const CoefficientSet coeffs = cfg.coefficients.build(cfg.dim);
  const NonlinearBC nbc = cfg.nonlinearity.build();
  const Mesh sample = mesh_interface(cfg.layout.domain, cfg.layout.s0, 0.1);
  double lam0 = std::numeric_limits<double>::infinity();
  for (double eps : cfg.eps_list) {
    const PerforationLayout layout = cfg.layout_at(eps);
    lam0 = std::min(lam0, estimate_lambda0(coeffs, nbc, geometry_constants(layout), &sample).lambda0);
    if (uses_interface_limit(cfg.tag)) {
      NonlinearBC eff = nbc;
      eff.a0 = nbc.a0 * cfg.alpha0_density(eps).sup();
      lam0 = std::min(lam0, estimate_lambda0(coeffs, eff, GeometryConstants{}, &sample).lambda0);
    }
  }
  return lam0 - 1.0;
}

RateRow process_eps(const StudyConfig& cfg, const RowInput& in, double lambda) {
  const PerforationLayout layout = cfg.layout_at(in.eps);
  const LevelErrors coarse = solve_level(cfg, layout, 0, lambda);
  const LevelErrors fine = solve_level(cfg, layout, 1, lambda);
  RateRow row;
  row.eps = in.eps;
  row.eta = layout.eta;
  row.kappa = in.kappa;
  row.vertices = fine.vertices;
  row.cavities = layout.size();
  const bool l2tag = is_l2_tag(cfg.tag);
  double lo = std::numeric_limits<double>::infinity();
  double hi = 0.0;
  for (std::size_t k = 0; k < cfg.rhs.size(); ++k) {
    const double fo = fine.f_omega[k];
    if (!(fo > 0.0)) {
      row.f_l2.push_back(0.0);
      row.f_h1.push_back(0.0);
      continue;
    }
    const double l2 = fine.l2[k] / fo;
    const double h1 = fine.h1[k] / fo;
    row.f_l2.push_back(l2);
    row.f_h1.push_back(h1);
    row.l2 = std::max(row.l2, l2);
    row.h1 = std::max(row.h1, h1);
    const double v = l2tag ? l2 : h1;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
    FNorms fn;
    fn.omega = l2tag ? fine.f_perforated[k] : fo;
    fn.theta = l2tag ? fine.f_theta[k] : 0.0;
    const std::optional<double> kappa = uses_interface_limit(cfg.tag) ? std::optional<double>(in.kappa) : std::nullopt;
    row.bound = std::max(row.bound, predicted_bound(cfg.tag, in.eps, layout.eta, cfg.dim, kappa, fn) / fo);
    for (const auto& [c, f] : {std::pair{coarse.l2[k], fine.l2[k]}, std::pair{coarse.h1[k], fine.h1[k]}}) {
      if (f > 0.0) row.guard = std::max(row.guard, std::abs(c - f) / f);
    }
  }
  row.uniformity = lo > 0.0 && std::isfinite(lo) ? hi / lo : 1.0;
  row.accepted = row.guard < cfg.mesh.guard_limit;
  spdlog::info("study {}: eps = {:.5g}, L2 = {:.4e}, H1 = {:.4e}, bound = {:.4e}, guard = {:.3f}{}", to_string(cfg.tag),
               in.eps, row.l2, row.h1, row.bound, row.guard, row.accepted ? "" : " (excluded)");
  return row;
}

}  // namespace

RateReport run_study(const StudyConfig& config, const StudyOptions& options) {
  config.validate();
  if (options.jobs < 1) throw Error(ErrorCode::invalid_argument, "jobs must be >= 1");
  RateReport report;
  report.tag = config.tag;
  report.dim = config.dim;
  report.lambda = study_lambda(config);

  std::vector<RowInput> inputs;
  for (double e : config.eps_list) inputs.push_back({e, 0.0});
  if (uses_interface_limit(config.tag)) {
    // Empirical kappa(eps) from the multiplier norm of alpha^eps - alpha^0.
    const SurfaceDensity a0 = config.alpha0_density(config.eps_list.front());
    SNormOptions sn = config.snorm;
    sn.seed = config.seed;
    const auto rows = kappa_table([&](double e) { return config.layout_at(e); }, a0, config.eps_list, config.slab, sn);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      inputs[i].kappa = rows[i].kappa;
      if (rows[i].stalled) report.notes.push_back("kappa eigen-iteration stalled at eps = " + std::to_string(rows[i].eps));
    }
  }

  std::vector<RateRow> rows(inputs.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&]() {
    for (std::size_t i = next++; i < inputs.size(); i = next++) {
      try {
        rows[i] = process_eps(config, inputs[i], report.lambda);
      } catch (...) {
        const std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const int threads = std::min<int>(options.jobs, static_cast<int>(inputs.size()));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  report.rows = std::move(rows);

  const bool l2tag = is_l2_tag(config.tag);
  std::vector<std::pair<double, double>> pl2;
  std::vector<std::pair<double, double>> ph1;
  std::vector<std::pair<double, double>> pb;
  bool all_zero = true;
  for (const auto& r : report.rows) {
    if (r.l2 > 0.0 || r.h1 > 0.0) all_zero = false;
    if (!r.accepted) {
      ++report.excluded;
      continue;
    }
    report.max_uniformity = std::max(report.max_uniformity, r.uniformity);
    if (r.l2 > 0.0) pl2.emplace_back(r.eps, r.l2);
    if (r.h1 > 0.0) ph1.emplace_back(r.eps, r.h1);
    if (r.bound > 0.0) pb.emplace_back(r.eps, r.bound);
  }
  if (report.excluded > 0) {
    report.notes.push_back(std::to_string(report.excluded) + " rows failed the discretization guard and were excluded");
  }
  if (all_zero) {
    report.degenerate = true;
    report.notes.push_back("all errors vanish (degenerate input); slopes are undefined");
    return report;
  }
  auto try_fit = [&](const std::vector<std::pair<double, double>>& p) -> std::optional<FitResult> {
    if (p.size() < 3) return std::nullopt;
    return fit_rate(p);
  };
  report.fit_l2 = try_fit(pl2);
  report.fit_h1 = try_fit(ph1);
  report.fit_bound = try_fit(pb);
  report.fit = l2tag ? report.fit_l2 : report.fit_h1;
  if (!report.fit) report.notes.push_back("fewer than 3 accepted rows; no slope fitted");

  if (config.expected_window) {
    report.window = *config.expected_window;
  } else if (report.fit_bound) {
    report.window = {report.fit_bound->slope - 0.2, report.fit_bound->slope + 0.2};
  }
  report.pass = report.fit && report.fit->slope >= report.window[0] && report.fit->slope <= report.window[1];

  // Single-constant dominance, the constant taken from the coarsest accepted row.
  report.dominance = false;
  for (const auto& r : report.rows) {
    if (!r.accepted || !(r.bound > 0.0)) continue;
    const double err = l2tag ? r.l2 : r.h1;
    if (report.c_fit == 0.0) {
      report.c_fit = err / r.bound;
      report.dominance = true;
    }
    if (err > report.c_fit * r.bound * (1.0 + config.mesh.guard_limit)) report.dominance = false;
  }
  return report;
}

void to_json(json& j, const RhsSpec& r) {
  j = {{"kind", r.kind},       {"amplitude", r.amplitude},          {"center", vec_json(r.center, 3)},
       {"width", r.width},     {"wave", vec_json(r.wave, 3)},       {"vanish_delta", r.vanish_delta}};
}

void from_json(const json& j, RhsSpec& r) {
  r.kind = j.value("kind", r.kind);
  r.amplitude = j.value("amplitude", r.amplitude);
  if (j.contains("center")) r.center = vec_from(j.at("center"));
  r.width = j.value("width", r.width);
  if (j.contains("wave")) r.wave = vec_from(j.at("wave"));
  r.vanish_delta = j.value("vanish_delta", r.vanish_delta);
}

void to_json(json& j, const StudyConfig& c) {
  j = {{"tag", to_string(c.tag)},
       {"dim", c.dim},
       {"layout", layout_params_json(c.layout_kind, c.layout)},
       {"eta", {{"coefficient", c.eta.coefficient}, {"exponent", c.eta.exponent}}},
       {"nonlinearity", {{"kind", kind_name(c.nonlinearity.kind)}, {"sigma", complex_json(c.nonlinearity.sigma)}}},
       {"rhs", c.rhs},
       {"eps", c.eps_list},
       {"mesh",
        {{"h", c.mesh.h},
         {"cavity_segments", c.mesh.cavity_segments},
         {"band_factor", c.mesh.band_factor},
         {"grading", c.mesh.grading},
         {"guard_limit", c.mesh.guard_limit}}},
       {"picard_tol", c.picard_tol},
       {"linear_tol", c.linear_tol},
       {"slab", {{"tau0", c.slab.tau0}, {"h_surface", c.slab.h_surface}, {"growth", c.slab.growth}, {"h_max", c.slab.h_max}}},
       {"snorm", {{"tol", c.snorm.tol}, {"max_iterations", c.snorm.max_iterations}, {"restarts", c.snorm.restarts}}},
       {"seed", c.seed}};
  json co = {{"drift", vec_json(c.coefficients.drift, 3)},
             {"potential", complex_json(c.coefficients.potential)},
             {"c0", c.coefficients.c0}};
  if (c.coefficients.A) {
    json a = json::array();
    for (int r = 0; r < 3; ++r) a.push_back({(*c.coefficients.A)(r, 0), (*c.coefficients.A)(r, 1), (*c.coefficients.A)(r, 2)});
    co["A"] = a;
  }
  j["coefficients"] = co;
  if (c.lambda) j["lambda"] = *c.lambda;
  if (c.alpha0) j["alpha0"] = *c.alpha0;
  if (c.expected_window) j["expected_window"] = {(*c.expected_window)[0], (*c.expected_window)[1]};
}

void from_json(const json& j, StudyConfig& c) {
  const TheoremTag tag = theorem_tag_from_string(j.value("tag", std::string("T2")));
  const int dim = j.value("dim", 2);
  c = StudyConfig::defaults(tag, dim);
  if (j.contains("layout")) layout_params_from(j.at("layout"), c.layout_kind, c.layout);
  c.layout.dim = dim;
  if (j.contains("eta")) {
    c.eta.coefficient = j.at("eta").value("coefficient", c.eta.coefficient);
    c.eta.exponent = j.at("eta").value("exponent", c.eta.exponent);
  }
  if (j.contains("coefficients")) {
    const auto& co = j.at("coefficients");
    if (co.contains("A")) {
      Eigen::Matrix3d a = Eigen::Matrix3d::Identity();
      for (int r = 0; r < 3; ++r) {
        for (int s = 0; s < 3; ++s) a(r, s) = co.at("A").at(static_cast<std::size_t>(r)).at(static_cast<std::size_t>(s)).get<double>();
      }
      c.coefficients.A = a;
    }
    if (co.contains("drift")) c.coefficients.drift = vec_from(co.at("drift"));
    if (co.contains("potential")) c.coefficients.potential = complex_from(co.at("potential"));
    c.coefficients.c0 = co.value("c0", c.coefficients.c0);
  }
  if (j.contains("nonlinearity")) {
    const auto& nl = j.at("nonlinearity");
    c.nonlinearity.kind = kind_from(nl.value("kind", std::string("zero")));
    if (nl.contains("sigma")) c.nonlinearity.sigma = complex_from(nl.at("sigma"));
  }
  if (j.contains("rhs")) {
    c.rhs.clear();
    for (const auto& r : j.at("rhs")) c.rhs.push_back(r.get<RhsSpec>());
  }
  if (j.contains("eps")) c.eps_list = j.at("eps").get<std::vector<double>>();
  if (j.contains("mesh")) {
    const auto& m = j.at("mesh");
    c.mesh.h = m.value("h", c.mesh.h);
    c.mesh.cavity_segments = m.value("cavity_segments", c.mesh.cavity_segments);
    c.mesh.band_factor = m.value("band_factor", c.mesh.band_factor);
    c.mesh.grading = m.value("grading", c.mesh.grading);
    c.mesh.guard_limit = m.value("guard_limit", c.mesh.guard_limit);
  }
  c.picard_tol = j.value("picard_tol", c.picard_tol);
  c.linear_tol = j.value("linear_tol", c.linear_tol);
  if (j.contains("lambda")) c.lambda = j.at("lambda").get<double>();
  if (j.contains("alpha0")) c.alpha0 = j.at("alpha0").get<double>();
  if (j.contains("expected_window")) {
    c.expected_window = std::array<double, 2>{j.at("expected_window").at(0).get<double>(),
                                              j.at("expected_window").at(1).get<double>()};
  }
  if (j.contains("slab")) {
    const auto& s = j.at("slab");
    c.slab.tau0 = s.value("tau0", c.slab.tau0);
    c.slab.h_surface = s.value("h_surface", c.slab.h_surface);
    c.slab.growth = s.value("growth", c.slab.growth);
    c.slab.h_max = s.value("h_max", c.slab.h_max);
  }
  if (j.contains("snorm")) {
    const auto& s = j.at("snorm");
    c.snorm.tol = s.value("tol", c.snorm.tol);
    c.snorm.max_iterations = s.value("max_iterations", c.snorm.max_iterations);
    c.snorm.restarts = s.value("restarts", c.snorm.restarts);
  }
  c.seed = j.value("seed", c.seed);
}

void to_json(json& j, const FitResult& f) {
  j = {{"slope", f.slope}, {"intercept", f.intercept}, {"stderr", f.stderr_slope}, {"points", f.points}};
}

void from_json(const json& j, FitResult& f) {
  f.slope = j.at("slope").get<double>();
  f.intercept = j.at("intercept").get<double>();
  f.stderr_slope = j.at("stderr").get<double>();
  f.points = j.at("points").get<int>();
}

void to_json(json& j, const RateRow& r) {
  j = {{"eps", r.eps},         {"eta", r.eta},         {"l2", r.l2},
       {"h1", r.h1},           {"bound", r.bound},     {"guard", r.guard},
       {"kappa", r.kappa},     {"uniformity", r.uniformity}, {"accepted", r.accepted},
       {"vertices", r.vertices}, {"cavities", r.cavities}, {"f_l2", r.f_l2},
       {"f_h1", r.f_h1}};
}

void from_json(const json& j, RateRow& r) {
  r.eps = j.at("eps").get<double>();
  r.eta = j.at("eta").get<double>();
  r.l2 = j.at("l2").get<double>();
  r.h1 = j.at("h1").get<double>();
  r.bound = j.at("bound").get<double>();
  r.guard = j.at("guard").get<double>();
  r.kappa = j.at("kappa").get<double>();
  r.uniformity = j.at("uniformity").get<double>();
  r.accepted = j.at("accepted").get<bool>();
  r.vertices = j.at("vertices").get<std::size_t>();
  r.cavities = j.at("cavities").get<std::size_t>();
  r.f_l2 = j.at("f_l2").get<std::vector<double>>();
  r.f_h1 = j.at("f_h1").get<std::vector<double>>();
}

void to_json(json& j, const RateReport& r) {
  j = {{"tag", to_string(r.tag)},
       {"dim", r.dim},
       {"lambda", r.lambda},
       {"rows", r.rows},
       {"window", {r.window[0], r.window[1]}},
       {"pass", r.pass},
       {"degenerate", r.degenerate},
       {"c_fit", r.c_fit},
       {"dominance", r.dominance},
       {"max_uniformity", r.max_uniformity},
       {"excluded", r.excluded},
       {"notes", r.notes}};
  auto put = [&j](const char* key, const std::optional<FitResult>& f) { j[key] = f ? json(*f) : json(nullptr); };
  put("fit", r.fit);
  put("fit_l2", r.fit_l2);
  put("fit_h1", r.fit_h1);
  put("fit_bound", r.fit_bound);
}

void from_json(const json& j, RateReport& r) {
  r.tag = theorem_tag_from_string(j.at("tag").get<std::string>());
  r.dim = j.at("dim").get<int>();
  r.lambda = j.at("lambda").get<double>();
  r.rows = j.at("rows").get<std::vector<RateRow>>();
  r.window = {j.at("window").at(0).get<double>(), j.at("window").at(1).get<double>()};
  r.pass = j.at("pass").get<bool>();
  r.degenerate = j.at("degenerate").get<bool>();
  r.c_fit = j.at("c_fit").get<double>();
  r.dominance = j.at("dominance").get<bool>();
  r.max_uniformity = j.at("max_uniformity").get<double>();
  r.excluded = j.at("excluded").get<int>();
  r.notes = j.at("notes").get<std::vector<std::string>>();
  auto get = [&j](const char* key) -> std::optional<FitResult> {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<FitResult>();
  };
  r.fit = get("fit");
  r.fit_l2 = get("fit_l2");
  r.fit_h1 = get("fit_h1");
  r.fit_bound = get("fit_bound");
}

void emit_report(const RateReport& report, const std::string& directory) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(directory, ec);
  if (ec) throw Error(ErrorCode::io_failure, "cannot create " + directory + ": " + ec.message());
  const fs::path dir(directory);

  {
    std::ofstream os(dir / "rates.csv");
    if (!os) throw Error(ErrorCode::io_failure, "cannot open " + (dir / "rates.csv").string());
    os << "eps,eta,l2,h1,bound,guard\n" << std::setprecision(12);
    for (const auto& r : report.rows) {
      if (!r.accepted) continue;
      os << r.eps << ',' << r.eta << ',' << r.l2 << ',' << r.h1 << ',' << r.bound << ',' << r.guard << '\n';
    }
    if (!os) throw Error(ErrorCode::io_failure, "write to rates.csv failed");
  }
  {
    std::ofstream os(dir / "summary.json");
    if (!os) throw Error(ErrorCode::io_failure, "cannot open " + (dir / "summary.json").string());
    os << json(report).dump(2) << '\n';
    if (!os) throw Error(ErrorCode::io_failure, "write to summary.json failed");
  }
  {
    std::ofstream os(dir / "plot.gp");
    if (!os) throw Error(ErrorCode::io_failure, "cannot open " + (dir / "plot.gp").string());
    const int col = is_l2_tag(report.tag) ? 3 : 4;
    os << "# gnuplot -p plot.gp\n"
       << "set datafile separator ','\n"
       << "set logscale xy\n"
       << "set key left top\n"
       << "set xlabel 'eps'\n"
       << "set ylabel 'error / ||f||'\n"
       << "set title '" << to_string(report.tag) << "'\n"
       << "C = " << std::setprecision(12) << report.c_fit << '\n'
       << "plot 'rates.csv' every ::1 using 1:3 with linespoints title 'L2', \\\n"
       << "     'rates.csv' every ::1 using 1:4 with linespoints title 'H1', \\\n"
       << "     'rates.csv' every ::1 using 1:(C*$5) with lines dashtype 2 title 'C * bound (column " << col << ")'\n";
    if (!os) throw Error(ErrorCode::io_failure, "write to plot.gp failed");
  }
}

namespace {

std::filesystem::path prepare_dir(const std::string& directory) {
  std::error_code ec;
  std::filesystem::create_directories(directory, ec);
  if (ec) throw Error(ErrorCode::io_failure, "cannot create " + directory + ": " + ec.message());
  return {directory};
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorCode::io_failure, "cannot open " + path.string());
  os << text;
  if (!os) throw Error(ErrorCode::io_failure, "write to " + path.string() + " failed");
}

std::optional<FitResult> fit_positive(const std::vector<std::pair<double, double>>& p) {
  std::vector<std::pair<double, double>> q;
  for (const auto& e : p) {
    if (e.second > 0.0) q.push_back(e);
  }
  if (q.size() < 3) return std::nullopt;
  return fit_rate(q);
}

}  // namespace

KappaStudy run_kappa_study(const StudyConfig& config) {
  config.validate();
  if (config.eta.exponent != 0.0) throw Error(ErrorCode::tag_mismatch, "kappa tables need a constant eta");
  KappaStudy study;
  SNormOptions sn = config.snorm;
  sn.seed = config.seed;
  study.rows = kappa_table([&](double e) { return config.layout_at(e); }, config.alpha0_density(config.eps_list.front()),
                           config.eps_list, config.slab, sn);
  std::vector<std::pair<double, double>> p;
  for (const auto& r : study.rows) p.emplace_back(r.eps, r.kappa);
  study.fit = fit_positive(p);
  return study;
}

void emit_kappa_report(const KappaStudy& study, const std::string& directory) {
  const auto dir = prepare_dir(directory);
  write_kappa_csv(study.rows, (dir / "kappa.csv").string());
  const json j = study;
  write_text(dir / "summary.json", j.dump(2) + "\n");
  write_text(dir / "plot.gp", "# gnuplot -p plot.gp\nset datafile separator ','\nset logscale xy\nset xlabel 'eps'\n"
                              "set ylabel 'kappa'\nplot 'kappa.csv' every ::1 using 1:2 with linespoints title 'kappa', \\\n"
                              "     'kappa.csv' every ::1 using 1:(sqrt($1)) with lines dashtype 2 title 'eps^{1/2}'\n");
}

CorrectorStudy run_corrector_study(const StudyConfig& config, int order, int grid, double calibration_factor) {
  config.validate();
  if (config.layout_kind != LayoutKind::periodic) {
    throw Error(ErrorCode::invalid_argument, "the corrector needs a strictly periodic layout");
  }
  if (config.eta.exponent != 0.0) throw Error(ErrorCode::tag_mismatch, "the corrector needs a constant eta");
  const std::vector<double> b{config.layout.periods[0], config.layout.periods[1]};
  const std::span<const double> periods(b.data(), static_cast<std::size_t>(config.dim - 1));
  const Mollifier moll = zeta(config.dim);
  const SurfaceDensity a0 = config.alpha0_density(config.eps_list.front());
  const PerforationLayout first = config.layout_at(config.eps_list.front());
  const BetaField beta = beta_field(first, periods, moll, a0, grid);
  const FourierCorrector psi = fourier_corrector(beta, order);

  CorrectorStudy study;
  study.boundary_residual = psi.boundary_residual;
  SNormOptions sn = config.snorm;
  sn.seed = config.seed;
  const auto kappa = kappa_table([&](double e) { return config.layout_at(e); }, a0, config.eps_list, config.slab, sn);
  std::vector<std::pair<double, double>> p;
  for (std::size_t i = 0; i < config.eps_list.size(); ++i) {
    CorrectorResidual r = corrector_residual_mu(psi, config.layout_at(config.eps_list[i]), moll, a0);
    if (i == 0) study.c_cal = r.mu > 0.0 ? calibrate_kappa(r.mu, kappa[i].kappa, calibration_factor) : 0.0;
    r.kappa = kappa_bound(r.mu, study.c_cal);
    study.rows.push_back(r);
    study.kappa_measured.push_back(kappa[i].kappa);
    p.emplace_back(r.eps, r.mu);
    spdlog::info("corrector: eps = {:.5g}, mu = {:.4e}, kappa bound = {:.4e}, measured = {:.4e}", r.eps, r.mu, r.kappa,
                 kappa[i].kappa);
  }
  study.fit_mu = fit_positive(p);
  study.bound_holds = true;
  for (std::size_t i = 0; i < study.rows.size(); ++i) {
    if (study.kappa_measured[i] > study.rows[i].kappa) study.bound_holds = false;
  }
  return study;
}

void emit_corrector_report(const CorrectorStudy& study, const std::string& directory) {
  const auto dir = prepare_dir(directory);
  write_corrector_csv(study.rows, (dir / "corrector.csv").string());
  const json j = study;
  write_text(dir / "summary.json", j.dump(2) + "\n");
  write_text(dir / "plot.gp", "# gnuplot -p plot.gp\nset datafile separator ','\nset logscale xy\nset xlabel 'eps'\n"
                              "plot 'corrector.csv' every ::1 using 1:6 with linespoints title 'mu', \\\n"
                              "     'corrector.csv' every ::1 using 1:7 with linespoints title 'kappa bound'\n");
}

void to_json(json& j, const KappaStudy& study) {
  json rows = json::array();
  for (const auto& r : study.rows) {
    rows.push_back({{"eps", r.eps}, {"kappa", r.kappa}, {"stalled", r.stalled}, {"iterations", r.iterations}});
  }
  j = {{"rows", rows}, {"fit", study.fit ? json(*study.fit) : json(nullptr)}};
}

void to_json(json& j, const CorrectorStudy& study) {
  json rows = json::array();
  for (std::size_t i = 0; i < study.rows.size(); ++i) {
    const auto& r = study.rows[i];
    rows.push_back({{"eps", r.eps},
                    {"psi_sup", r.psi_sup},
                    {"lap_sup", r.lap_sup},
                    {"outer_flux", r.outer_flux},
                    {"s_mismatch", r.s_mismatch},
                    {"mu", r.mu},
                    {"kappa_bound", r.kappa},
                    {"kappa_measured", study.kappa_measured[i]}});
  }
  j = {{"rows", rows},
      {"c_cal", study.c_cal},
      {"boundary_residual", study.boundary_residual},
      {"bound_holds", study.bound_holds},
      {"fit_mu", study.fit_mu ? json(*study.fit_mu) : json(nullptr)}};
}

StudyConfig load_study_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorCode::io_failure, "cannot open " + path);
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::invalid_argument, "malformed study config " + path + ": " + e.what());
  }
  try {
    return j.get<StudyConfig>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::invalid_argument, "invalid study config " + path + ": " + e.what());
  }
}

}  // namespace perfhom
