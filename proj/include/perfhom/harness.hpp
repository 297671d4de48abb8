#pragma once

#include "perfhom/alpha.hpp"
#include "perfhom/corrector.hpp"
#include "perfhom/fem.hpp"
#include "perfhom/geometry.hpp"
#include "perfhom/mesh.hpp"
#include "perfhom/snorm.hpp"
#include "perfhom/solvers.hpp"

#include <array>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace perfhom {

/// T1a: a = 0, plain limit, H1.  T1b: eta -> 0, plain limit, H1.  T2: delta limit, H1.
/// T3a / T3b: L2 versions of T1a / T1b.  T4: L2 version of T2.
enum class TheoremTag { T1a, T1b, T2, T3a, T3b, T4 };

std::string to_string(TheoremTag tag);
TheoremTag theorem_tag_from_string(const std::string& name);
/// True for the tags whose limit is the interface (delta) problem.
bool uses_interface_limit(TheoremTag tag);
/// True for the L2 tags (T3a, T3b, T4).
bool is_l2_tag(TheoremTag tag);

/// Closed-form right-hand sides. Kinds:
///   constant      f = amplitude
///   affine_sine   f = amplitude (1 + x_1 + sin(pi x_n))
///   gaussian      f = amplitude exp(-|x - center|^2 / width^2)
///   cosine        f = amplitude prod_i cos(pi wave_i x_i)
/// With vanish_delta > 0 the field is multiplied by a smooth cutoff that is 0
/// within vanish_delta of S and 1 beyond 2 vanish_delta.
struct RhsSpec {
  std::string kind = "constant";
  double amplitude = 1.0;
  Vec3 center = Vec3::Zero();
  double width = 0.25;
  Vec3 wave = Vec3::Ones();
  double vanish_delta = 0.0;

  [[nodiscard]] ScalarField field(double s0, int dim) const;
};

/// Constant coefficients (identity principal part when A is absent).
struct CoefficientSpec {
  std::optional<Eigen::Matrix3d> A;
  Vec3 drift = Vec3::Zero();
  Complex potential = 0.0;
  double c0 = 1.0;

  [[nodiscard]] CoefficientSet build(int dim) const;
};

struct NonlinearitySpec {
  NonlinearKind kind = NonlinearKind::zero;
  Complex sigma = 0.0;

  [[nodiscard]] NonlinearBC build() const;
};

/// Mesh sizes at the coarse level; the guard re-solves with every size halved.
struct MeshBudget {
  double h = 0.05;
  /// Segments per cavity boundary (2D) or around a great circle (3D).
  int cavity_segments = 32;
  /// Element size on S as a multiple of eps.
  double band_factor = 0.25;
  double grading = 0.3;
  /// Rows whose guard ratio reaches this value are excluded from the fit.
  double guard_limit = 0.1;

  [[nodiscard]] MeshOptions options(const PerforationLayout& layout, int level) const;
};

struct StudyConfig {
  TheoremTag tag = TheoremTag::T2;
  int dim = 2;
  LayoutKind layout_kind = LayoutKind::periodic;
  LayoutParams layout;
  EtaRule eta;
  CoefficientSpec coefficients;
  NonlinearitySpec nonlinearity;
  std::vector<RhsSpec> rhs;
  std::vector<double> eps_list{1.0 / 8, 1.0 / 12, 1.0 / 16, 1.0 / 24, 1.0 / 32, 1.0 / 48, 1.0 / 64};
  MeshBudget mesh;
  double picard_tol = 1e-10;
  double linear_tol = 1e-12;
  /// Default: min over the sweep of the coercivity estimates, minus 1.
  std::optional<double> lambda;
  /// Default: the flat periodic formula eta^{n-1} |d omega| / prod b_i.
  std::optional<double> alpha0;
  /// Slope window for the pass flag; default: the bound's own slope +- 0.2.
  std::optional<std::array<double, 2>> expected_window;
  SlabOptions slab;
  SNormOptions snorm;
  std::uint64_t seed = 1;

  /// The default configuration of a theorem tag on Omega = (0,1) x (-1/2,1/2), S = {x_2 = 0}.
  static StudyConfig defaults(TheoremTag tag, int dim = 2);
  /// Throws tag_mismatch or invalid_argument.
  void validate() const;
  [[nodiscard]] PerforationLayout layout_at(double eps) const;
  [[nodiscard]] SurfaceDensity alpha0_density(double eps) const;
};

struct FNorms {
  /// ||f||_{L2(Omega^eps)} (||f||_{L2(Omega)} for the H1 tags).
  double omega = 1.0;
  /// ||f||_{L2(theta^eps)}, the part of f inside the cavities.
  double theta = 0.0;
};

/// The bound of the tag with every constant set to 1. kappa is required for T2 and T4.
double predicted_bound(TheoremTag tag, double eps, double eta, int n, std::optional<double> kappa = std::nullopt,
                       const FNorms& f = {});

struct FitResult {
  double slope = 0.0;
  double intercept = 0.0;
  double stderr_slope = 0.0;
  int points = 0;
};

/// Least squares on (log eps, log error); throws insufficient_points below 3 pairs.
FitResult fit_rate(std::span<const std::pair<double, double>> pairs);

struct RateRow {
  double eps = 0.0;
  double eta = 1.0;
  /// max over f of ||u_eps - u_0|| / ||f||_{L2(Omega)} at the fine level.
  double l2 = 0.0;
  double h1 = 0.0;
  /// max over f of the bound divided by ||f||_{L2(Omega)}.
  double bound = 0.0;
  /// max over f and norms of |E_h - E_{h/2}| / E_{h/2}.
  double guard = 0.0;
  double kappa = 0.0;
  /// max / min over f of the normalized error of the tag's norm.
  double uniformity = 1.0;
  bool accepted = true;
  std::size_t vertices = 0;
  std::size_t cavities = 0;
  std::vector<double> f_l2;
  std::vector<double> f_h1;
};

struct RateReport {
  TheoremTag tag = TheoremTag::T2;
  int dim = 2;
  double lambda = 0.0;
  std::vector<RateRow> rows;
  /// Fit of the tag's norm, and of both norms, over the accepted rows.
  std::optional<FitResult> fit;
  std::optional<FitResult> fit_l2;
  std::optional<FitResult> fit_h1;
  std::optional<FitResult> fit_bound;
  std::array<double, 2> window{0.0, 0.0};
  bool pass = false;
  /// All errors vanish (f = 0): slopes are undefined.
  bool degenerate = false;
  /// C fixed on the coarsest accepted row; dominance holds when every row
  /// satisfies error <= C bound (1 + guard_limit).
  double c_fit = 0.0;
  bool dominance = false;
  double max_uniformity = 1.0;
  int excluded = 0;
  std::vector<std::string> notes;
};

struct StudyOptions {
  /// Number of eps values processed concurrently.
  int jobs = 1;
};

RateReport run_study(const StudyConfig& config, const StudyOptions& options = {});

/// rates.csv (accepted rows), summary.json, plot.gp in `directory`.
void emit_report(const RateReport& report, const std::string& directory);

/// kappa(eps) = ||alpha^eps - alpha^0||_S over the configured eps list.
struct KappaStudy {
  std::vector<KappaRow> rows;
  std::optional<FitResult> fit;
};

KappaStudy run_kappa_study(const StudyConfig& config);
/// kappa.csv, summary.json, plot.gp.
void emit_kappa_report(const KappaStudy& study, const std::string& directory);

/// Flat periodic corrector: mu(eps) per eps, the measured kappa, and the
/// calibrated bound c_cal mu^{1/2} (c_cal frozen at the coarsest eps).
struct CorrectorStudy {
  std::vector<CorrectorResidual> rows;
  std::vector<double> kappa_measured;
  double c_cal = 0.0;
  double boundary_residual = 0.0;
  std::optional<FitResult> fit_mu;
  /// Measured kappa <= calibrated bound at every eps.
  bool bound_holds = false;
};

CorrectorStudy run_corrector_study(const StudyConfig& config, int order = 64, int grid = 256,
                                   double calibration_factor = 2.0);
/// corrector.csv, summary.json, plot.gp.
void emit_corrector_report(const CorrectorStudy& study, const std::string& directory);

void to_json(nlohmann::json& j, const RhsSpec& r);
void from_json(const nlohmann::json& j, RhsSpec& r);
void to_json(nlohmann::json& j, const StudyConfig& c);
void from_json(const nlohmann::json& j, StudyConfig& c);
void to_json(nlohmann::json& j, const FitResult& f);
void from_json(const nlohmann::json& j, FitResult& f);
void to_json(nlohmann::json& j, const RateRow& r);
void from_json(const nlohmann::json& j, RateRow& r);
void to_json(nlohmann::json& j, const RateReport& r);
void from_json(const nlohmann::json& j, RateReport& r);
void to_json(nlohmann::json& j, const KappaStudy& s);
void to_json(nlohmann::json& j, const CorrectorStudy& s);

StudyConfig load_study_config(const std::string& path);

}  // namespace perfhom
