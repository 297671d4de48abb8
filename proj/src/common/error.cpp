#include "perfhom/error.hpp"

namespace perfhom {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid-argument";
    case ErrorCode::infeasible_spacing: return "infeasible-spacing";
    case ErrorCode::manifold_outside_domain: return "manifold-outside-domain";
    case ErrorCode::meshing_failure: return "meshing-failure";
    case ErrorCode::resolution_too_coarse: return "resolution-too-coarse";
    case ErrorCode::inconsistent_mesh: return "inconsistent-mesh";
    case ErrorCode::non_elliptic_coefficients: return "non-elliptic-coefficients";
    case ErrorCode::missing_facet_tags: return "missing-facet-tags";
    case ErrorCode::no_convergence: return "no-convergence";
    case ErrorCode::picard_divergence: return "picard-divergence";
    case ErrorCode::linear_solve_failure: return "linear-solve-failure";
    case ErrorCode::point_off_manifold: return "point-off-manifold";
    case ErrorCode::nonzero_mean: return "nonzero-mean";
    case ErrorCode::truncation_insufficient: return "truncation-insufficient";
    case ErrorCode::tag_mismatch: return "tag-mismatch";
    case ErrorCode::insufficient_points: return "insufficient-points";
    case ErrorCode::io_failure: return "io-failure";
    case ErrorCode::lambda_out_of_range: return "lambda-out-of-range";
  }
  return "unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

}  // namespace perfhom
