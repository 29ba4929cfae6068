"""Python bindings for the biomark core library."""

from ._core import (
    ConvergenceError,
    Error,
    NumericalError,
    ValidationError,
    band_relative_power,
    butterworth_magnitude,
    compute_metrics,
    glmnet_fit_path,
    relieff_rank,
    roc_auc,
    run_experiment,
    studentized_range_cdf,
    studentized_range_critical,
    write_synth,
)

__all__ = [
    "ConvergenceError",
    "Error",
    "NumericalError",
    "ValidationError",
    "band_relative_power",
    "butterworth_magnitude",
    "compute_metrics",
    "glmnet_fit_path",
    "relieff_rank",
    "roc_auc",
    "run_experiment",
    "studentized_range_cdf",
    "studentized_range_critical",
    "write_synth",
]
