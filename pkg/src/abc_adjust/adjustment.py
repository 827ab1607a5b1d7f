"""Regression adjustment of accepted parameter values.

Homoscedastic adjustment moves every accepted draw by the difference between
the fitted mean at the observation and at its own statistics::

    theta_c = m(s_obs) + (theta - m(s))

Heteroscedastic adjustment additionally rescales the residual by the ratio of
fitted conditional standard deviations::

    theta_c = m(s_obs) + sigma(s_obs) / sigma(s) * (theta - m(s))

When a parameter carries a log or logit transform, regression and adjustment
happen on the transformed scale and the result is mapped back, which keeps
adjusted values inside the declared support.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .data import ObservedSummaries, SimulationTable, TransformSpec, WeightedSample
from .errors import ConfigError, DataError, NumericalError
from .regression import (MlpConfig, RegressionModel, VarianceModel, fit_log_variance, fit_mlp,
                         fit_ridge, fit_wls_linear)
from .rejection import RejectionConfig, RejectionOutput, reject

MODES = ("none", "homoscedastic", "heteroscedastic")
MEAN_KINDS = ("linear", "ridge", "mlp")
SIGMA_FLOOR = 1e-12


# --- transforms -----------------------------------------------------------------

def _columns(values, spec: TransformSpec):
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    return values, spec.for_width(values.shape[1])


def transform_forward(theta, spec: TransformSpec) -> np.ndarray:
    theta, spec = _columns(theta, spec)
    phi = theta.copy()
    for j, t in enumerate(spec.transforms):
        col = theta[:, j]
        if t.kind == "log":
            bad = np.flatnonzero(~(col > 0))
            if bad.size:
                raise DataError(f"log transform needs positive values; row {bad[0] + 1}, column {j + 1} "
                                f"has {col[bad[0]]!r}")
            phi[:, j] = np.log(col)
        elif t.kind == "logit":
            bad = np.flatnonzero(~((col > t.lower) & (col < t.upper)))
            if bad.size:
                raise DataError(f"logit transform needs values in ({t.lower}, {t.upper}); row {bad[0] + 1}, "
                                f"column {j + 1} has {col[bad[0]]!r}")
            phi[:, j] = np.log((col - t.lower) / (t.upper - col))
    return phi


def _expit(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def transform_back(phi, spec: TransformSpec) -> np.ndarray:
    """Inverse of :func:`transform_forward`; overflow saturates just inside the support."""
    phi, spec = _columns(phi, spec)
    theta = phi.copy()
    for j, t in enumerate(spec.transforms):
        col = phi[:, j]
        if t.kind == "log":
            with np.errstate(over="ignore", under="ignore"):
                v = np.exp(col)
            theta[:, j] = np.clip(v, np.nextafter(0.0, 1.0), np.finfo(float).max)
        elif t.kind == "logit":
            with np.errstate(over="ignore", under="ignore"):
                v = t.lower + (t.upper - t.lower) * _expit(col)
            theta[:, j] = np.clip(v, np.nextafter(t.lower, t.upper), np.nextafter(t.upper, t.lower))
    return theta


# --- adjustment -------------------------------------------------------------------

def _prepare(sample: WeightedSample, stats, obs, transforms: Optional[TransformSpec]):
    stats = np.asarray(stats, dtype=float)
    if stats.ndim == 1:
        stats = stats[:, None]
    if stats.shape[0] != sample.m:
        raise DataError(f"sample has {sample.m} rows but {stats.shape[0]} statistic rows were given")
    s_obs = obs.s_obs if isinstance(obs, ObservedSummaries) else np.atleast_1d(np.asarray(obs, dtype=float))
    if s_obs.shape[0] != stats.shape[1]:
        raise DataError(f"observation has {s_obs.shape[0]} statistics, sample rows have {stats.shape[1]}")
    spec = (transforms or TransformSpec()).for_width(sample.p)
    return stats, s_obs[None, :], spec


def adjust_homoscedastic(sample: WeightedSample, model: RegressionModel, stats, obs,
                         transforms: Optional[TransformSpec] = None) -> WeightedSample:
    stats, s_obs, spec = _prepare(sample, stats, obs, transforms)
    phi = transform_forward(sample.values, spec)
    adjusted = model.predict(s_obs) + (phi - model.predict(stats))
    return sample.with_values(transform_back(adjusted, spec), "homoscedastic")


def adjust_heteroscedastic(sample: WeightedSample, mean_model: RegressionModel, var_model: VarianceModel,
                           stats, obs, transforms: Optional[TransformSpec] = None) -> WeightedSample:
    stats, s_obs, spec = _prepare(sample, stats, obs, transforms)
    phi = transform_forward(sample.values, spec)
    sigma_obs = var_model.sigma(s_obs)
    sigma = var_model.sigma(stats)
    low = sigma < SIGMA_FLOOR * sigma_obs
    if np.any(low):
        i, j = np.argwhere(low)[0]
        raise NumericalError(f"fitted conditional sd at accepted row {i + 1} (parameter {j + 1}) is below "
                             f"{SIGMA_FLOOR:g} times its value at the observation")
    adjusted = mean_model.predict(s_obs) + (sigma_obs / sigma) * (phi - mean_model.predict(stats))
    return sample.with_values(transform_back(adjusted, spec), "heteroscedastic")


@dataclass(frozen=True)
class AdjustmentConfig:
    mode: str = "homoscedastic"
    mean_kind: str = "linear"
    ridge_lambda: float = 1e-3
    mlp: MlpConfig = field(default_factory=MlpConfig)
    variance_kind: Optional[str] = None
    transforms: TransformSpec = field(default_factory=TransformSpec)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown adjustment mode {self.mode!r}; choose from {MODES}")
        if self.mean_kind not in MEAN_KINDS:
            raise ConfigError(f"unknown mean model {self.mean_kind!r}; choose from {MEAN_KINDS}")
        if self.mode == "heteroscedastic" and self.variance_kind is None:
            raise ConfigError("heteroscedastic adjustment needs a variance model kind")
        if self.variance_kind is not None and self.variance_kind not in ("linear", "ridge", "mlp"):
            raise ConfigError(f"unknown variance model {self.variance_kind!r}")


def fit_mean(stats, phi, weights, config: AdjustmentConfig) -> RegressionModel:
    if config.mean_kind == "linear":
        return fit_wls_linear(stats, phi, weights)
    if config.mean_kind == "ridge":
        return fit_ridge(stats, phi, weights, config.ridge_lambda)
    return fit_mlp(stats, phi, weights, config.mlp)


@dataclass(frozen=True)
class AbcResult:
    rejection: RejectionOutput
    posterior: WeightedSample
    mean_model: Optional[RegressionModel] = None
    variance_model: Optional[VarianceModel] = None


def adjust(rej: RejectionOutput, table: SimulationTable, obs: ObservedSummaries,
           config: AdjustmentConfig = AdjustmentConfig()) -> AbcResult:
    """Fit the configured regression on the accepted rows and adjust them."""
    sample = rej.sample
    if config.mode == "none":
        return AbcResult(rej, sample)
    spec = config.transforms.for_width(sample.p)
    stats = table.stats[rej.accepted_indices]
    phi = transform_forward(sample.values, spec)
    mean_model = fit_mean(stats, phi, sample.weights, config)
    if config.mode == "homoscedastic":
        return AbcResult(rej, adjust_homoscedastic(sample, mean_model, stats, obs, spec), mean_model)
    residuals = phi - mean_model.predict(stats)
    var_model = fit_log_variance(stats, residuals, sample.weights, config.variance_kind, config.mlp)
    adjusted = adjust_heteroscedastic(sample, mean_model, var_model, stats, obs, spec)
    return AbcResult(rej, adjusted, mean_model, var_model)


def infer(table: SimulationTable, obs: ObservedSummaries,
          rejection: RejectionConfig = RejectionConfig(),
          adjustment: AdjustmentConfig = AdjustmentConfig()) -> AbcResult:
    """Rejection followed by regression adjustment."""
    return adjust(reject(table, obs, rejection), table, obs, adjustment)


def method_config(name: str, transforms: Optional[TransformSpec] = None, ridge_lambda: float = 1e-3,
                  mlp: Optional[MlpConfig] = None) -> AdjustmentConfig:
    """Adjustment settings for a method name such as ``loclinear`` or ``neuralnet-hetero``.

    Base names are ``rejection``, ``loclinear``, ``ridge`` and ``neuralnet``; a
    ``-hetero`` suffix selects heteroscedastic adjustment (``-homo`` is the
    default and may be spelled out).
    """
    base, _, variant = name.partition("-")
    kinds = {"loclinear": "linear", "ridge": "ridge", "neuralnet": "mlp"}
    transforms = transforms or TransformSpec()
    if base == "rejection":
        if variant:
            raise ConfigError("rejection takes no homo/hetero variant")
        return AdjustmentConfig(mode="none", transforms=transforms)
    if base not in kinds or variant not in ("", "homo", "hetero"):
        raise ConfigError(f"unknown method {name!r}")
    kind = kinds[base]
    if variant == "hetero":
        return AdjustmentConfig("heteroscedastic", kind, ridge_lambda, mlp or MlpConfig(),
                                "mlp" if kind == "mlp" else "linear", transforms)
    return AdjustmentConfig("homoscedastic", kind, ridge_lambda, mlp or MlpConfig(), None, transforms)
