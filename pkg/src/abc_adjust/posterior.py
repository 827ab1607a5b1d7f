"""Posterior summaries, marginal kernel density estimates and shrinkage diagnostics."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .data import WeightedSample
from .errors import ConfigError, NumericalError

DEFAULT_GRID = 512
_CUM_TOL = 1e-12
POINT_MASS_TOL = 1e-12


@dataclass(frozen=True)
class PosteriorDensity:
    grid: np.ndarray
    density: np.ndarray
    bandwidth: float
    kernel: str
    parameter: int


@dataclass(frozen=True)
class PosteriorSummary:
    param_names: tuple
    mean: np.ndarray
    variance: np.ndarray
    median: np.ndarray
    intervals: dict  # level -> (lower (p,), upper (p,))

    def rows(self):
        """``(key, value)`` pairs in a stable order for text reports."""
        for k, name in enumerate(self.param_names):
            yield f"{name}.mean", self.mean[k]
            yield f"{name}.variance", self.variance[k]
            yield f"{name}.sd", float(np.sqrt(self.variance[k]))
            yield f"{name}.median", self.median[k]
            for level in sorted(self.intervals):
                lo, hi = self.intervals[level]
                yield f"{name}.ci{_level_tag(level)}.lower", lo[k]
                yield f"{name}.ci{_level_tag(level)}.upper", hi[k]


def _level_tag(level: float) -> str:
    return f"{100 * level:g}"


def weighted_mean_var(sample: WeightedSample):
    w = sample.weights
    mean = w @ sample.values
    var = w @ (sample.values - mean) ** 2
    return mean, var


def weighted_quantile(sample: WeightedSample, level: float, parameter: int = 0) -> float:
    """Smallest value whose cumulative weight (values sorted ascending) reaches ``level``."""
    if not 0 < level <= 1:
        raise ConfigError(f"quantile level must lie in (0, 1], got {level}")
    x = sample.values[:, parameter]
    order = np.argsort(x, kind="stable")
    cum = np.cumsum(sample.weights[order])
    k = int(np.searchsorted(cum, level - _CUM_TOL, side="left"))
    return float(x[order[min(k, len(x) - 1)]])


def credible_interval(sample: WeightedSample, level: float, parameter: int = 0):
    """Central interval with ``(1 - level) / 2`` posterior mass excluded on each side."""
    if not 0 < level < 1:
        raise ConfigError(f"credible level must lie in (0, 1), got {level}")
    tail = 0.5 * (1.0 - level)
    return weighted_quantile(sample, tail, parameter), weighted_quantile(sample, 1.0 - tail, parameter)


def summarize(sample: WeightedSample, levels: Sequence[float] = (0.95,)) -> PosteriorSummary:
    mean, var = weighted_mean_var(sample)
    median = np.array([weighted_quantile(sample, 0.5, k) for k in range(sample.p)])
    intervals = {}
    for level in levels:
        bounds = np.array([credible_interval(sample, level, k) for k in range(sample.p)])
        intervals[float(level)] = (bounds[:, 0], bounds[:, 1])
    return PosteriorSummary(sample.param_names, mean, var, median, intervals)


def kde_bandwidth(sample: WeightedSample, parameter: int = 0) -> float:
    """Weighted Silverman rule ``0.9 * min(sd, IQR / 1.34) * m_eff ** -0.2``.

    The effective sample size ``m_eff = 1 / sum(w**2)`` replaces the count.
    If the weighted IQR is 0 while the spread is not, the standard deviation is
    used alone.  A spread below ``1e-12`` times the largest magnitude counts as
    a point mass and raises :class:`NumericalError`.
    """
    x = sample.values[:, parameter]
    w = sample.weights
    mean = w @ x
    sd = float(np.sqrt(w @ (x - mean) ** 2))
    # spread at rounding level is a point mass for all practical purposes
    if not sd > POINT_MASS_TOL * np.max(np.abs(x)):
        raise NumericalError("degenerate sample; density unavailable")
    iqr = weighted_quantile(sample, 0.75, parameter) - weighted_quantile(sample, 0.25, parameter)
    spread = min(sd, iqr / 1.34) if iqr > 0 else sd
    return 0.9 * spread * sample.effective_size ** -0.2


def _smoothing_kernel(u: np.ndarray, kind: str) -> np.ndarray:
    if kind == "gaussian":
        return np.exp(-0.5 * u * u) / np.sqrt(2 * np.pi)
    if kind == "epanechnikov":
        return np.where(np.abs(u) <= 1, 0.75 * (1 - u * u), 0.0)
    if kind == "uniform":
        return np.where(np.abs(u) <= 1, 0.5, 0.0)
    raise ConfigError(f"unknown kernel {kind!r}")


def default_grid(sample: WeightedSample, bandwidth: float, parameter: int = 0,
                 size: int = DEFAULT_GRID, margin: float = 3.0) -> np.ndarray:
    x = sample.values[:, parameter]
    return np.linspace(x.min() - margin * bandwidth, x.max() + margin * bandwidth, size)


def weighted_kde(sample: WeightedSample, grid=None, bandwidth: Optional[float] = None,
                 kernel: str = "gaussian", parameter: int = 0, chunk: int = 2048) -> PosteriorDensity:
    """Marginal density ``sum_i w_i K((x_i - t) / h) / h`` evaluated on ``grid``."""
    h = kde_bandwidth(sample, parameter) if bandwidth is None else float(bandwidth)
    if not h > 0:
        raise ConfigError(f"smoothing bandwidth must be positive, got {h}")
    grid = default_grid(sample, h, parameter) if grid is None else np.asarray(grid, dtype=float)
    if grid.ndim != 1 or (grid.size > 1 and not np.all(np.diff(grid) > 0)):
        raise ConfigError("grid must be a strictly increasing 1-d array")
    x = sample.values[:, parameter]
    # summing in value order makes the result independent of row order
    order = np.lexsort((sample.weights, x))
    x, w = x[order], sample.weights[order]
    dens = np.empty(grid.size)
    for start in range(0, grid.size, chunk):
        g = grid[start:start + chunk]
        dens[start:start + chunk] = w @ _smoothing_kernel((x[:, None] - g[None, :]) / h, kernel) / h
    return PosteriorDensity(grid, dens, h, kernel, parameter)


def shrinkage_ratio(adjusted: WeightedSample, rejection: WeightedSample) -> np.ndarray:
    """Per-parameter ratio of adjusted to unadjusted weighted variance."""
    if adjusted.m != rejection.m:
        raise ConfigError("samples must cover the same accepted set")
    _, v_adj = weighted_mean_var(adjusted)
    _, v_rej = weighted_mean_var(rejection)
    if np.any(v_rej <= 0):
        raise NumericalError("rejection sample has zero variance; shrinkage undefined")
    return v_adj / v_rej
