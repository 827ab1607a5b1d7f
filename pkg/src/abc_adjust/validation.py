"""Cross-validation, bootstrap error bars and Monte-Carlo error studies."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

from .adjustment import AdjustmentConfig, adjust, method_config
from .data import ObservedSummaries, SimulationTable
from .errors import AbcError, ConfigError, DataError, NumericalError
from .posterior import weighted_mean_var
from .rejection import RejectionConfig, reject
from .toys import ToySpec, analytic_posterior, simulate

Method = Tuple[str, RejectionConfig, AdjustmentConfig]


@dataclass(frozen=True)
class CvReport:
    methods: tuple
    errors: np.ndarray  # mean scaled squared error per method
    point_errors: np.ndarray  # (methods, used held-out points)
    se: np.ndarray  # bootstrap standard error per method
    holdout: np.ndarray  # indices of held-out rows in the table
    failed: np.ndarray  # held-out rows excluded because some method failed
    config: dict = field(default_factory=dict)

    @property
    def n_used(self) -> int:
        return self.point_errors.shape[1]

    def error_of(self, method: str) -> float:
        return float(self.errors[self.methods.index(method)])

    def rows(self):
        """``(method, error, se, lower, upper)`` with two-standard-error bars."""
        for name, err, se in zip(self.methods, self.errors, self.se):
            yield name, float(err), float(se), float(err - 2 * se), float(err + 2 * se)


def _normalize_methods(methods) -> List[Method]:
    out = []
    for m in methods:
        if isinstance(m, str):
            out.append((m, RejectionConfig(), method_config(m)))
        else:
            name, rej, adj = m
            out.append((name, rej, adj))
    names = [m[0] for m in out]
    if len(set(names)) != len(names):
        raise ConfigError(f"duplicate method names: {names}")
    return out


def bootstrap_se(errors, B: int = 1000, seed: int = 0) -> float:
    """Standard deviation of the mean of ``errors`` over ``B`` bootstrap resamples."""
    errors = np.asarray(errors, dtype=float).ravel()
    if errors.size < 2:
        raise DataError("bootstrap needs at least two points")
    if B < 100:
        raise ConfigError(f"use at least 100 bootstrap resamples, got {B}")
    if np.all(errors == errors[0]):
        return 0.0
    rng = np.random.Generator(np.random.PCG64(seed))
    n = errors.size
    means = np.empty(B)
    step = max(1, 2_000_000 // n)
    for start in range(0, B, step):
        stop = min(B, start + step)
        idx = rng.integers(0, n, size=(stop - start, n))
        means[start:stop] = errors[idx].mean(axis=1)
    return float(np.std(means, ddof=1))


def cross_validate(table: SimulationTable, methods: Sequence, n_holdout: int = 100, seed: int = 0,
                   bootstrap: int = 1000) -> CvReport:
    """Leave-out evaluation of several ABC methods on the same pseudo-observations.

    ``n_holdout`` rows are drawn without replacement; all of them are removed
    from the reference table, and each in turn supplies the observation.  The
    error of a method at a held-out row is the squared difference between its
    posterior mean and the true parameter, divided by the parameter's variance
    across the full table, averaged over parameters.  A held-out row on which
    any method fails numerically is dropped for every method.

    ``methods`` holds method names (see :func:`method_config`) or
    ``(name, RejectionConfig, AdjustmentConfig)`` triples.
    """
    methods = _normalize_methods(methods)
    if not methods:
        raise ConfigError("no methods to compare")
    if not 1 <= n_holdout < table.n:
        raise ConfigError(f"n_holdout must lie in [1, n) = [1, {table.n}), got {n_holdout}")
    rng = np.random.Generator(np.random.PCG64(seed))
    holdout = np.sort(rng.choice(table.n, size=n_holdout, replace=False))
    keep = np.ones(table.n, dtype=bool)
    keep[holdout] = False
    ref = table.subset(keep)
    scale = np.std(table.theta, axis=0, ddof=1)
    scale = np.where(scale > 0, scale, 1.0)

    errs = np.full((len(methods), n_holdout), np.nan)
    failed = []
    for col, i in enumerate(holdout):
        obs = ObservedSummaries(table.stats[i])
        cache = {}
        try:
            for row, (_, rej_cfg, adj_cfg) in enumerate(methods):
                if rej_cfg not in cache:
                    cache[rej_cfg] = reject(ref, obs, rej_cfg)
                est, _ = weighted_mean_var(adjust(cache[rej_cfg], ref, obs, adj_cfg).posterior)
                errs[row, col] = float(np.mean(((est - table.theta[i]) / scale) ** 2))
        except NumericalError:
            failed.append(i)
            errs[:, col] = np.nan
    ok = ~np.isnan(errs).any(axis=0)
    used = errs[:, ok]
    if used.shape[1] == 0:
        raise NumericalError("every held-out point failed")
    means = np.array([math.fsum(r) / r.size for r in used])
    se = np.array([bootstrap_se(r, bootstrap, seed) if r.size >= 2 else np.nan for r in used])
    echo = {"n_holdout": n_holdout, "seed": seed, "bootstrap": bootstrap, "n_reference": ref.n}
    return CvReport(tuple(m[0] for m in methods), means, used, se, holdout, np.array(failed, dtype=int), echo)


def write_cv_report(report: CvReport, dest) -> None:
    lines = ["method,error,se,lower_2se,upper_2se,n_used,n_failed"]
    for name, err, se, lo, hi in report.rows():
        lines.append(f"{name},{err:.17g},{se:.17g},{lo:.17g},{hi:.17g},{report.n_used},{report.failed.size}")
    _write_lines(dest, lines)


def _write_lines(dest, lines):
    text = "\n".join(lines) + "\n"
    if hasattr(dest, "write"):
        dest.write(text)
    else:
        with open(dest, "w", encoding="utf-8") as fh:
            fh.write(text)


# --- Monte-Carlo error study ---------------------------------------------------

@dataclass(frozen=True)
class StudyRow:
    n: int
    q: int
    estimator: str
    mse: float
    se: float


def _replicate_seed(seed: int, n: int, rep: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=(n, rep)).generate_state(1)[0])


def mse_study(toy: str, n_values: Sequence[int], q_values: Sequence[int], estimators: Sequence[str],
              replicates: int = 20, seed: int = 0, acceptance_rate: float = 0.01,
              kernel: str = "epanechnikov", spec: ToySpec = None) -> List[StudyRow]:
    """MSE of the ABC posterior mean against the exact posterior mean.

    For each ``n`` and replicate a fresh table and observation are simulated;
    the statistic dimension ``q`` is reached by appending ``q - 1`` pure-noise
    statistics to the informative one.  All ``q`` values and estimators within
    a replicate share the same draws of the parameter and informative
    statistic, so comparisons are paired.
    """
    if toy not in ("gaussian_conjugate", "linear_gaussian_multi"):
        raise ConfigError(f"toy {toy!r} has no analytic posterior; use gaussian_conjugate")
    if replicates < 1:
        raise ConfigError("replicates must be >= 1")
    base = spec or ToySpec(toy)
    rej = RejectionConfig(kernel=kernel, acceptance_rate=acceptance_rate)
    adj = {name: method_config(name) for name in estimators}
    sq = {(n, q, e): [] for n in n_values for q in q_values for e in estimators}
    for n in n_values:
        for rep in range(replicates):
            rseed = _replicate_seed(seed, n, rep)
            for q in q_values:
                if q < 1:
                    raise ConfigError(f"q must be >= 1, got {q}")
                s = ToySpec("linear_gaussian_multi", base.mu0, base.tau0, base.sigma, base.k, q - 1, rseed)
                data = simulate(s, n)
                target, _ = analytic_posterior(s, data.observed.s_obs)
                r = reject(data.table, data.observed, rej)
                for name in estimators:
                    try:
                        est, _ = weighted_mean_var(adjust(r, data.table, data.observed, adj[name]).posterior)
                        sq[(n, q, name)].append(float(est[0] - target) ** 2)
                    except AbcError:
                        sq[(n, q, name)].append(np.nan)
    rows = []
    for (n, q, name), vals in sq.items():
        v = np.array(vals)
        v = v[~np.isnan(v)]
        mse = math.fsum(v) / v.size if v.size else float("nan")
        se = float(np.std(v, ddof=1) / math.sqrt(v.size)) if v.size > 1 else float("nan")
        rows.append(StudyRow(n, q, name, mse, se))
    return rows


def write_study(rows: Sequence[StudyRow], dest) -> None:
    lines = ["n,q,estimator,mse,se"]
    lines += [f"{r.n},{r.q},{r.estimator},{r.mse:.17g},{r.se:.17g}" for r in rows]
    _write_lines(dest, lines)
