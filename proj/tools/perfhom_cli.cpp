#include "perfhom/error.hpp"
#include "perfhom/harness.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

namespace {

using perfhom::StudyConfig;

struct Common {
  std::string config;
  std::string out = "out";
  int jobs = 1;
  std::optional<std::uint64_t> seed;
  std::string tag = "T2";
  int dim = 2;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "Study configuration (JSON); defaults of --tag when absent");
  cmd->add_option("--out", c.out, "Output directory")->capture_default_str();
  cmd->add_option("--jobs", c.jobs, "Concurrent eps values")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--seed", c.seed, "Seed for layouts, meshes and eigen-iterations");
  cmd->add_option("--tag", c.tag, "Theorem tag for the default configuration")
      ->check(CLI::IsMember({"T1a", "T1b", "T2", "T3a", "T3b", "T4"}))
      ->capture_default_str();
  cmd->add_option("--dim", c.dim, "Dimension for the default configuration")
      ->check(CLI::IsMember({2, 3}))
      ->capture_default_str();
}

StudyConfig load(const Common& c) {
  StudyConfig cfg = c.config.empty() ? StudyConfig::defaults(perfhom::theorem_tag_from_string(c.tag), c.dim)
                                     : perfhom::load_study_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  return cfg;
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream os(path);
  if (!os) throw perfhom::Error(perfhom::ErrorCode::io_failure, "cannot open " + path.string());
  os << j.dump(2) << '\n';
}

int cmd_study(const Common& c) {
  const StudyConfig cfg = load(c);
  const perfhom::RateReport r = perfhom::run_study(cfg, {c.jobs});
  perfhom::emit_report(r, c.out);
  std::cout << perfhom::to_string(r.tag) << ": ";
  if (r.fit) {
    std::cout << (perfhom::is_l2_tag(r.tag) ? "L2" : "H1") << " slope " << r.fit->slope << " +- " << r.fit->stderr_slope
              << ", window [" << r.window[0] << ", " << r.window[1] << "], " << (r.pass ? "pass" : "FAIL");
  } else {
    std::cout << "no slope (" << (r.degenerate ? "degenerate input" : "too few accepted rows") << ")";
  }
  std::cout << "; reports in " << c.out << '\n';
  return r.pass || r.degenerate ? 0 : 1;
}

int cmd_snorm(const Common& c) {
  const perfhom::KappaStudy s = perfhom::run_kappa_study(load(c));
  perfhom::emit_kappa_report(s, c.out);
  for (const auto& r : s.rows) {
    std::cout << "eps " << r.eps << "  kappa " << r.kappa << (r.stalled ? "  (stalled)" : "") << '\n';
  }
  if (s.fit) std::cout << "slope " << s.fit->slope << " +- " << s.fit->stderr_slope << '\n';
  return 0;
}

int cmd_corrector(const Common& c, int order, int grid) {
  const perfhom::CorrectorStudy s = perfhom::run_corrector_study(load(c), order, grid);
  perfhom::emit_corrector_report(s, c.out);
  for (std::size_t i = 0; i < s.rows.size(); ++i) {
    std::cout << "eps " << s.rows[i].eps << "  mu " << s.rows[i].mu << "  kappa bound " << s.rows[i].kappa
              << "  measured " << s.kappa_measured[i] << '\n';
  }
  if (s.fit_mu) std::cout << "mu slope " << s.fit_mu->slope << '\n';
  std::cout << "bound " << (s.bound_holds ? "holds" : "VIOLATED") << " at every eps\n";
  return s.bound_holds ? 0 : 1;
}

int cmd_mesh(const Common& c, double eps, bool fine, bool mtx) {
  const StudyConfig cfg = load(c);
  const perfhom::PerforationLayout layout = cfg.layout_at(eps);
  perfhom::MeshOptions mo = cfg.mesh.options(layout, fine ? 1 : 0);
  mo.seed = cfg.seed;
  const perfhom::MeshPair mp = perfhom::mesh_perforated_with_companion(layout, mo);
  std::filesystem::create_directories(c.out);
  const std::filesystem::path dir(c.out);
  perfhom::write_mesh_file(mp.perforated, (dir / "perforated.mesh").string());
  perfhom::write_mesh_file(mp.companion, (dir / "companion.mesh").string());
  write_json(dir / "layout.json", nlohmann::json(layout));
  if (mtx) {
    perfhom::CoefficientSet coeffs = cfg.coefficients.build(cfg.dim);
    const perfhom::AssembledSystem sys = perfhom::assemble(mp.perforated, coeffs);
    perfhom::write_matrix_market(sys.K, (dir / "stiffness.mtx").string());
  }
  std::cout << "perforated: " << mp.perforated.num_vertices() << " vertices, " << mp.perforated.num_simplices()
            << " simplices; companion: " << mp.companion.num_vertices() << " vertices"
            << (mp.nested ? " (nested)" : "") << "; " << layout.size() << " cavities\n";
  return 0;
}

int cmd_validate(const Common& c, double eps) {
  const StudyConfig cfg = load(c);
  cfg.validate();
  const perfhom::PerforationLayout layout = cfg.layout_at(eps);
  const perfhom::ValidationReport rep = perfhom::validate_layout(layout);
  std::filesystem::create_directories(c.out);
  write_json(std::filesystem::path(c.out) / "validation.json", nlohmann::json(rep));
  for (const auto& chk : rep.checks) {
    std::cout << (chk.pass ? "pass " : "FAIL ") << chk.name << "  margin " << chk.margin
              << (chk.detail.empty() ? "" : "  " + chk.detail) << '\n';
  }
  std::cout << (rep.pass ? "layout valid" : "layout INVALID") << '\n';
  return rep.pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Homogenization studies for domains perforated along a manifold"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string level = "info";
  app.add_option("--log-level", level, "trace, debug, info, warn, error, off")->capture_default_str();

  Common common;
  int order = 64;
  int grid = 256;
  double eps = 0.125;
  bool fine = false;
  bool mtx = false;

  auto* study = app.add_subcommand("study", "Convergence study: rates.csv, summary.json, plot.gp");
  add_common(study, common);
  auto* snorm = app.add_subcommand("snorm", "kappa(eps) table from the multiplier norm");
  add_common(snorm, common);
  auto* corr = app.add_subcommand("corrector", "Boundary-layer corrector residual mu(eps) and the kappa bound");
  add_common(corr, common);
  corr->add_option("--order", order, "Fourier modes per axis")->capture_default_str();
  corr->add_option("--grid", grid, "Samples per axis of the cell datum")->capture_default_str();
  auto* mesh = app.add_subcommand("mesh", "Perforated and companion meshes for one eps");
  add_common(mesh, common);
  mesh->add_option("--eps", eps, "eps")->capture_default_str();
  mesh->add_flag("--fine", fine, "Use the guard (halved) mesh sizes");
  mesh->add_flag("--mtx", mtx, "Also dump the perforated stiffness matrix (Matrix Market)");
  auto* validate = app.add_subcommand("validate", "Check the configuration and the layout conditions at one eps");
  add_common(validate, common);
  validate->add_option("--eps", eps, "eps")->capture_default_str();

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(spdlog::level::from_str(level));

  try {
    if (*study) return cmd_study(common);
    if (*snorm) return cmd_snorm(common);
    if (*corr) return cmd_corrector(common, order, grid);
    if (*mesh) return cmd_mesh(common, eps, fine, mtx);
    if (*validate) return cmd_validate(common, eps);
  } catch (const perfhom::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
