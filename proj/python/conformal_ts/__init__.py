"""Adaptive per-dimension, per-horizon confidence intervals for multivariate
time-series forecasts: a fitted error-quantile net combined with lagged online
coverage control, plus conformal baselines (CP, ACI, ECI) and ablations."""

from ._core import (
    ConfigError,
    DataError,
    InternalError,
    QuantileNet,
    abs_normal_quantile,
    align_targets,
    calibrate_panel,
    compute_errors,
    constant_quantile_model,
    empirical_quantile_higher,
    generate_panel,
    load_quantile_net,
    mace_bound_rhs,
    metrics_report,
    normal_quantile,
    pinball_loss,
    read_tensor,
    run_cli,
    sigma_fit,
    theorem1_bound,
    train_quantile_net,
    write_tensor,
)

__all__ = [
    "ConfigError",
    "DataError",
    "InternalError",
    "QuantileNet",
    "abs_normal_quantile",
    "align_targets",
    "calibrate_panel",
    "compute_errors",
    "constant_quantile_model",
    "empirical_quantile_higher",
    "generate_panel",
    "load_quantile_net",
    "mace_bound_rhs",
    "metrics_report",
    "normal_quantile",
    "pinball_loss",
    "read_tensor",
    "run_cli",
    "sigma_fit",
    "theorem1_bound",
    "train_quantile_net",
    "write_tensor",
]
