#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace perfhom {

enum class ErrorCode {
  invalid_argument,
  infeasible_spacing,
  manifold_outside_domain,
  meshing_failure,
  resolution_too_coarse,
  inconsistent_mesh,
  non_elliptic_coefficients,
  missing_facet_tags,
  no_convergence,
  picard_divergence,
  linear_solve_failure,
  point_off_manifold,
  nonzero_mean,
  truncation_insufficient,
  tag_mismatch,
  insufficient_points,
  io_failure,
  lambda_out_of_range,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Every failure raised by the library carries one of the codes above so that
/// callers (CLI, Python bindings, tests) can branch on the kind of failure.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  [[nodiscard]] ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace perfhom
