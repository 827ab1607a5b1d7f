"""Approximate Bayesian computation by rejection and regression adjustment."""

__version__ = "0.1.0"

from .adjustment import (AbcResult, AdjustmentConfig, adjust, adjust_heteroscedastic,
                         adjust_homoscedastic, infer, method_config, transform_back, transform_forward)
from .data import (ObservedSummaries, SimulationTable, TableFormat, Transform, TransformSpec,
                   WeightedSample, load_observed, load_table, validate_observed, write_table)
from .errors import AbcError, ConfigError, DataError, NumericalError
from .posterior import (credible_interval, kde_bandwidth, shrinkage_ratio, summarize,
                        weighted_kde, weighted_mean_var, weighted_quantile)
from .regression import (MlpConfig, fit_log_variance, fit_mlp, fit_ridge, fit_wls_linear,
                         predict)
from .rejection import RejectionConfig, reject
from .toys import ToySpec, analytic_posterior, simulate

__all__ = [
    "AbcError",
    "AbcResult",
    "AdjustmentConfig",
    "ConfigError",
    "DataError",
    "MlpConfig",
    "NumericalError",
    "ObservedSummaries",
    "RejectionConfig",
    "SimulationTable",
    "TableFormat",
    "ToySpec",
    "Transform",
    "TransformSpec",
    "WeightedSample",
    "adjust",
    "adjust_heteroscedastic",
    "adjust_homoscedastic",
    "analytic_posterior",
    "credible_interval",
    "fit_log_variance",
    "fit_mlp",
    "fit_ridge",
    "fit_wls_linear",
    "infer",
    "kde_bandwidth",
    "load_observed",
    "load_table",
    "method_config",
    "predict",
    "reject",
    "shrinkage_ratio",
    "simulate",
    "summarize",
    "transform_back",
    "transform_forward",
    "validate_observed",
    "weighted_kde",
    "weighted_mean_var",
    "weighted_quantile",
    "write_table",
]
