"""Kernel-weighted rejection: standardize, measure distance to the observation, weight."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .data import ObservedSummaries, SimulationTable, WeightedSample
from .errors import ConfigError, DataError, NumericalError

KERNELS = ("uniform", "epanechnikov", "gaussian")
STANDARDIZATIONS = ("mad", "sd", "none")

# consistency constant turning the raw MAD into a standard-deviation estimate
MAD_NORMAL = 1.4826


@dataclass(frozen=True)
class RejectionConfig:
    kernel: str = "epanechnikov"
    acceptance_rate: Optional[float] = 0.01
    bandwidth: Optional[float] = None
    standardization: str = "mad"

    def __post_init__(self):
        if self.kernel not in KERNELS:
            raise ConfigError(f"unknown kernel {self.kernel!r}; choose from {KERNELS}")
        if self.standardization not in STANDARDIZATIONS:
            raise ConfigError(f"unknown standardization {self.standardization!r}")
        if (self.acceptance_rate is None) == (self.bandwidth is None):
            raise ConfigError("set exactly one of acceptance_rate and bandwidth")
        if self.acceptance_rate is not None and not 0 < self.acceptance_rate <= 1:
            raise ConfigError(f"acceptance_rate must lie in (0, 1], got {self.acceptance_rate}")
        if self.bandwidth is not None and not self.bandwidth > 0:
            raise ConfigError(f"bandwidth must be positive, got {self.bandwidth}")


@dataclass(frozen=True)
class RejectionOutput:
    sample: WeightedSample
    accepted_indices: np.ndarray
    distances: np.ndarray
    bandwidth: float
    scales: np.ndarray


def standardize(table: SimulationTable, obs: ObservedSummaries, mode: str = "mad"):
    """Divide every statistic column (and the observation) by a per-column scale.

    Returns ``(scaled_stats, scaled_obs, scales)``.  ``mad`` uses the
    normal-consistent median absolute deviation, ``sd`` the sample standard
    deviation (ddof=1), ``none`` leaves the data untouched.
    """
    stats = table.stats
    if mode == "none":
        scales = np.ones(table.q)
    elif mode == "mad":
        med = np.median(stats, axis=0)
        scales = MAD_NORMAL * np.median(np.abs(stats - med), axis=0)
    elif mode == "sd":
        if table.n < 2:
            raise DataError("sd standardization needs at least two simulations")
        scales = np.std(stats, axis=0, ddof=1)
    else:
        raise ConfigError(f"unknown standardization {mode!r}")
    zero = np.flatnonzero(~(scales > 0))
    if zero.size:
        raise DataError(f"statistic {table.stat_names[zero[0]]} has zero {mode} scale "
                        "(constant column); drop it or use standardization=none")
    return stats / scales, obs.s_obs / scales, scales


def distances(scaled_stats: np.ndarray, scaled_obs: np.ndarray) -> np.ndarray:
    scaled_stats = np.atleast_2d(scaled_stats)
    scaled_obs = np.asarray(scaled_obs, dtype=float)
    if scaled_stats.shape[1] != scaled_obs.shape[-1]:
        raise DataError(f"statistics have {scaled_stats.shape[1]} columns, observation has {scaled_obs.shape[-1]}")
    diff = scaled_stats - scaled_obs
    return np.sqrt(np.einsum("ij,ij->i", diff, diff))


def bandwidth_from_rate(dist: np.ndarray, rate: float) -> float:
    """The ``ceil(rate * n)``-th smallest distance."""
    if not 0 < rate <= 1:
        raise ConfigError(f"acceptance rate must lie in (0, 1], got {rate}")
    dist = np.asarray(dist, dtype=float)
    n = dist.shape[0]
    if n < 1:
        raise DataError("no distances")
    k = min(n, math.ceil(rate * n - 1e-9))
    k = max(k, 1)
    h = float(np.partition(dist, k - 1)[k - 1])
    if h == 0:
        raise NumericalError(f"bandwidth is 0: the observation is matched exactly by at least {k} "
                             "simulations; pass an explicit bandwidth instead")
    return h


def kernel(u: np.ndarray, kind: str) -> np.ndarray:
    """Unnormalized rejection kernel K(u) as used for weighting (K(0) = 1 except Epanechnikov)."""
    u = np.abs(np.asarray(u, dtype=float))
    if kind == "uniform":
        return (u <= 1).astype(float)
    if kind == "epanechnikov":
        return np.where(u <= 1, 0.75 * (1 - u * u), 0.0)
    if kind == "gaussian":
        return np.exp(-0.5 * u * u)
    raise ConfigError(f"unknown kernel {kind!r}")


def kernel_weights(dist: np.ndarray, h: float, kind: str):
    """Weights ``K(d / h)`` restricted to the accepted set.

    Rows with ``d > h`` are dropped for every kernel, including the Gaussian,
    and so are rows whose kernel value is 0 (the Epanechnikov boundary).

    Returns ``(accepted_indices, normalized_weights)``.
    """
    if not h > 0:
        raise ConfigError(f"bandwidth must be positive, got {h}")
    dist = np.asarray(dist, dtype=float)
    raw = kernel(dist / h, kind)
    raw[dist > h] = 0.0
    idx = np.flatnonzero(raw > 0)
    if idx.size == 0:
        raise NumericalError("no accepted simulations: every kernel weight is zero")
    w = raw[idx]
    return idx, w / w.sum()


def reject(table: SimulationTable, obs: ObservedSummaries, config: RejectionConfig = RejectionConfig()) -> RejectionOutput:
    scaled, scaled_obs, scales = standardize(table, obs, config.standardization)
    d = distances(scaled, scaled_obs)
    if config.bandwidth is not None:
        h = float(config.bandwidth)
    else:
        h = bandwidth_from_rate(d, config.acceptance_rate)
    idx, w = kernel_weights(d, h, config.kernel)
    sample = WeightedSample(table.theta[idx], w, "rejection", table.param_names)
    return RejectionOutput(sample, idx, d[idx], h, scales)
