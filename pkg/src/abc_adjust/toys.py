"""Toy generative models with known posteriors, used as correctness oracles.

Random numbers come from numpy's PCG64 bit generator.  A toy seed is expanded
with ``SeedSequence(seed).spawn(2)``: the first child stream draws the
reference table, the second the observed dataset.  Within the table stream,
columns are drawn in a fixed order (parameter, statistic, then each noise
statistic), so tables that differ only in the number of noise statistics share
their parameter and informative-statistic columns.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from .data import ObservedSummaries, SimulationTable
from .errors import ConfigError

TOY_IDS = ("gaussian_conjugate", "linear_gaussian_multi", "hetero_scale")


@dataclass(frozen=True)
class ToySpec:
    """Hyperparameters of a toy model.

    ``gaussian_conjugate``: theta ~ N(mu0, tau0**2); the statistic is the mean
    of ``k`` draws from N(theta, sigma**2).
    ``linear_gaussian_multi``: the same plus ``n_noise`` independent N(0, 1)
    statistics carrying no information.
    ``hetero_scale``: theta ~ U(0, 1) and s ~ N(theta, (0.05 + 0.5 * theta)**2).
    """

    id: str = "gaussian_conjugate"
    mu0: float = 0.0
    tau0: float = 1.0
    sigma: float = 1.0
    k: int = 10
    n_noise: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.id not in TOY_IDS:
            raise ConfigError(f"unknown toy model {self.id!r}; choose from {TOY_IDS}")
        if not (self.tau0 > 0 and self.sigma >= 0):
            raise ConfigError("tau0 must be positive and sigma nonnegative")
        if self.k < 1 or self.n_noise < 0:
            raise ConfigError("k must be >= 1 and n_noise >= 0")

    @property
    def noise_statistics(self) -> int:
        return self.n_noise if self.id == "linear_gaussian_multi" else 0

    def as_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, values: dict) -> "ToySpec":
        types = {f.name: f.type for f in fields(cls)}
        unknown = set(values) - set(types)
        if unknown:
            raise ConfigError(f"unknown toy settings: {sorted(unknown)}")
        cast = {"id": str, "k": int, "n_noise": int, "seed": int}
        try:
            return cls(**{key: cast.get(key, float)(val) for key, val in values.items()})
        except ValueError as exc:
            raise ConfigError(f"bad toy setting: {exc}") from None


@dataclass(frozen=True)
class ToyData:
    table: SimulationTable
    observed: ObservedSummaries
    truth: np.ndarray  # parameter value that generated the observation


def _draw(spec: ToySpec, rng: np.random.Generator, n: int):
    if spec.id == "hetero_scale":
        theta = rng.uniform(0.0, 1.0, size=n)
        s = theta + (0.05 + 0.5 * theta) * rng.standard_normal(n)
        return theta[:, None], s[:, None]
    theta = spec.mu0 + spec.tau0 * rng.standard_normal(n)
    s = theta + spec.sigma / math.sqrt(spec.k) * rng.standard_normal(n)
    cols = [s] + [rng.standard_normal(n) for _ in range(spec.noise_statistics)]
    return theta[:, None], np.column_stack(cols)


def stat_names(spec: ToySpec) -> tuple:
    return ("stat_mean",) + tuple(f"stat_noise{j + 1}" for j in range(spec.noise_statistics))


def simulate(spec: ToySpec, n: int) -> ToyData:
    """Reference table of ``n`` simulations plus one observed dataset and its true parameter."""
    if n < 1:
        raise ConfigError(f"number of simulations must be >= 1, got {n}")
    table_seq, obs_seq = np.random.SeedSequence(spec.seed).spawn(2)
    theta, stats = _draw(spec, np.random.Generator(np.random.PCG64(table_seq)), n)
    theta_obs, s_obs = _draw(spec, np.random.Generator(np.random.PCG64(obs_seq)), 1)
    table = SimulationTable(theta, stats, ("param_theta",), stat_names(spec))
    return ToyData(table, ObservedSummaries(s_obs[0]), theta_obs[0])


def analytic_posterior(spec: ToySpec, s_obs) -> tuple:
    """Conjugate normal posterior ``(mean, variance)`` given the informative statistic.

    Noise statistics are independent of theta and drop out.  ``tau0 = inf``
    gives the flat-prior limit.
    """
    if spec.id == "hetero_scale":
        raise ConfigError("no analytic posterior for hetero_scale")
    s = float(np.atleast_1d(s_obs)[0])
    if spec.sigma == 0:
        return s, 0.0
    like_prec = spec.k / spec.sigma**2
    prior_prec = 1.0 / spec.tau0**2
    prec = prior_prec + like_prec
    mean = (prior_prec * spec.mu0 + like_prec * s) / prec
    return mean, 1.0 / prec
