"""Python bindings for the perfhom library."""

from ._perfhom import (
    PerfhomError,
    default_config,
    fit_rate,
    predicted_bound,
    run_corrector_study,
    run_kappa_study,
    run_study,
    s_norm_constant,
    validate_layout,
)

__all__ = [
    "PerfhomError",
    "default_config",
    "fit_rate",
    "predicted_bound",
    "run_corrector_study",
    "run_kappa_study",
    "run_study",
    "s_norm_constant",
    "validate_layout",
]
