"""Weighted regression of parameters on summary statistics.

Conditional-mean models are fitted by minimizing the weighted squared error
``sum_i w_i * (theta_i - m(s_i))**2`` over an affine family (plain or ridge
penalized) or over a one-hidden-layer tanh network.  The conditional variance
is obtained by regressing ``log(residual**2)`` on the statistics with the same
weights.

Statistics are centered and scaled by their weighted mean and standard
deviation before fitting; the transformation is stored on the model and
applied again by ``predict``, which always takes statistics in their original
units.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .errors import ConfigError, DataError, NumericalError

LOG_FLOOR = 1e-300
RANK_TOL = 1e-10


def _check_inputs(stats, theta, weights):
    stats = np.asarray(stats, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if stats.ndim == 1:
        stats = stats[:, None]
    if theta.ndim == 1:
        theta = theta[:, None]
    w = np.asarray(weights, dtype=float).ravel()
    if not (stats.shape[0] == theta.shape[0] == w.shape[0]):
        raise DataError(f"row counts differ: stats {stats.shape[0]}, theta {theta.shape[0]}, weights {w.shape[0]}")
    if np.any(w < 0) or not w.sum() > 0:
        raise DataError("weights must be nonnegative with a positive sum")
    keep = w > 0
    return stats[keep], theta[keep], w[keep] / w[keep].sum()


def weighted_center_scale(x: np.ndarray, w: np.ndarray):
    """Weighted column means and standard deviations (zero deviations reported as 0)."""
    center = w @ x
    scale = np.sqrt(w @ (x - center) ** 2)
    return center, scale


@dataclass(frozen=True)
class LinearModel:
    """Affine model ``theta = intercept + coef @ s`` in original units."""

    kind: str
    intercept: np.ndarray  # (p,)
    coef: np.ndarray  # (p, q)
    center: np.ndarray
    scale: np.ndarray
    penalty: float = 0.0

    @property
    def q(self) -> int:
        return self.coef.shape[1]

    @property
    def p(self) -> int:
        return self.coef.shape[0]

    def predict(self, stats) -> np.ndarray:
        stats = _as_rows(stats, self.q)
        return self.intercept + stats @ self.coef.T

    def to_text(self) -> str:
        lines = [f"kind = {self.kind}", f"penalty = {self.penalty:.17g}"]
        for k in range(self.p):
            lines.append(f"intercept[{k}] = {self.intercept[k]:.17g}")
            lines.append(f"coef[{k}] = " + " ".join(f"{c:.17g}" for c in self.coef[k]))
        return "\n".join(lines)


@dataclass(frozen=True)
class MlpConfig:
    """One hidden tanh layer, linear output, full-batch gradient descent.

    ``hidden_units=None`` picks ``max(4, ceil(q / 2))``.  ``learning_rate``
    is the first trial step; later trial steps follow the Barzilai-Borwein
    rule and every epoch backtracks (halving) until the loss decreases
    sufficiently, so the training loss never increases.
    """

    hidden_units: Optional[int] = None
    epochs: int = 2000
    learning_rate: float = 0.1
    l2: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if self.hidden_units is not None and self.hidden_units < 1:
            raise ConfigError("hidden_units must be >= 1")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        if self.l2 < 0:
            raise ConfigError("l2 penalty must be >= 0")

    def units_for(self, q: int) -> int:
        return self.hidden_units or max(4, math.ceil(q / 2))


@dataclass(frozen=True)
class MlpModel:
    kind: str
    w1: np.ndarray  # (H, q)
    b1: np.ndarray  # (H,)
    w2: np.ndarray  # (p, H)
    b2: np.ndarray  # (p,)
    x_center: np.ndarray
    x_scale: np.ndarray
    y_center: np.ndarray
    y_scale: np.ndarray
    loss_history: tuple = field(default=(), repr=False)

    @property
    def q(self) -> int:
        return self.w1.shape[1]

    @property
    def p(self) -> int:
        return self.w2.shape[0]

    def predict(self, stats) -> np.ndarray:
        z = (_as_rows(stats, self.q) - self.x_center) / self.x_scale
        out = np.tanh(z @ self.w1.T + self.b1) @ self.w2.T + self.b2
        return self.y_center + self.y_scale * out

    def to_text(self) -> str:
        h = self.w1.shape[0]
        final = self.loss_history[-1] if self.loss_history else float("nan")
        return "\n".join([f"kind = {self.kind}", f"hidden_units = {h}",
                          f"epochs_run = {max(len(self.loss_history) - 1, 0)}",
                          f"final_loss = {final:.17g}"])


RegressionModel = Union[LinearModel, MlpModel]


def _as_rows(stats, q: int) -> np.ndarray:
    stats = np.asarray(stats, dtype=float)
    if stats.ndim == 0:
        stats = stats.reshape(1, 1)
    elif stats.ndim == 1:
        stats = stats[None, :] if stats.shape[0] == q else stats[:, None]
    if stats.shape[1] != q:
        raise DataError(f"model expects {q} statistics, got {stats.shape[1]}")
    return stats


def predict(model: RegressionModel, stats) -> np.ndarray:
    """Predicted parameters, one row per row of ``stats`` (original units)."""
    return model.predict(stats)


def _fit_affine(stats, theta, weights, lam: float, kind: str) -> LinearModel:
    s, y, w = _check_inputs(stats, theta, weights)
    m, q = s.shape
    center, scale = weighted_center_scale(s, w)
    if kind == "linear":
        if m < q + 2:
            raise NumericalError(f"linear regression needs at least q+2={q + 2} rows with positive weight, got {m}")
        const = np.flatnonzero(~(scale > 0))
        if const.size:
            raise NumericalError(f"statistic column {const[0]} is constant among weighted rows: "
                                 "rank-deficient design, use ridge")
    safe = np.where(scale > 0, scale, 1.0)
    z = (s - center) / safe
    ymean = w @ y
    sw = np.sqrt(w)[:, None]
    a = sw * z
    b = sw * (y - ymean)
    if lam > 0:
        a = np.vstack([a, np.diag(np.sqrt(lam) / safe)])
        b = np.vstack([b, np.zeros((q, y.shape[1]))])
    coef_z, _, rank, sv = np.linalg.lstsq(a, b, rcond=None)
    if lam == 0 and (rank < q or sv[-1] <= RANK_TOL * sv[0]):
        raise NumericalError("rank-deficient weighted design (collinear statistics); use ridge regression")
    coef = (coef_z / safe[:, None]).T  # (p, q)
    intercept = ymean - coef @ center
    return LinearModel(kind, intercept, coef, center, safe, float(lam))


def fit_wls_linear(stats, theta, weights) -> LinearModel:
    """Exact weighted-least-squares affine fit, one output per parameter."""
    return _fit_affine(stats, theta, weights, 0.0, "linear")


def fit_ridge(stats, theta, weights, lam: float) -> LinearModel:
    """Weighted least squares plus ``lam * ||coef||**2``; the intercept is not penalized."""
    if lam < 0:
        raise ConfigError(f"ridge penalty must be >= 0, got {lam}")
    return _fit_affine(stats, theta, weights, float(lam), "ridge")


# --- neural network -----------------------------------------------------------

def _unpack(params: np.ndarray, q: int, h: int, p: int):
    i = 0
    w1 = params[i:i + h * q].reshape(h, q); i += h * q
    b1 = params[i:i + h]; i += h
    w2 = params[i:i + p * h].reshape(p, h); i += p * h
    b2 = params[i:i + p]
    return w1, b1, w2, b2


def mlp_loss(params, x, y, w, hidden: int, l2: float) -> float:
    w1, b1, w2, b2 = _unpack(params, x.shape[1], hidden, y.shape[1])
    r = np.tanh(x @ w1.T + b1) @ w2.T + b2 - y
    return float(w @ np.sum(r * r, axis=1) + l2 * (np.sum(w1 * w1) + np.sum(w2 * w2)))


def mlp_loss_and_grad(params, x, y, w, hidden: int, l2: float):
    """Weighted squared loss with L2 penalty on the weight matrices, and its gradient."""
    w1, b1, w2, b2 = _unpack(params, x.shape[1], hidden, y.shape[1])
    act = np.tanh(x @ w1.T + b1)
    r = act @ w2.T + b2 - y
    loss = float(w @ np.sum(r * r, axis=1) + l2 * (np.sum(w1 * w1) + np.sum(w2 * w2)))
    dout = 2.0 * w[:, None] * r
    g_w2 = dout.T @ act + 2.0 * l2 * w2
    g_b2 = dout.sum(axis=0)
    dpre = (dout @ w2) * (1.0 - act * act)
    g_w1 = dpre.T @ x + 2.0 * l2 * w1
    g_b1 = dpre.sum(axis=0)
    return loss, np.concatenate([g_w1.ravel(), g_b1, g_w2.ravel(), g_b2])


def init_mlp_params(q: int, hidden: int, p: int, seed: int) -> np.ndarray:
    rng = np.random.Generator(np.random.PCG64(seed))
    w1 = rng.normal(0.0, 1.0 / math.sqrt(q), size=(hidden, q))
    w2 = rng.normal(0.0, 1.0 / math.sqrt(hidden), size=(p, hidden))
    return np.concatenate([w1.ravel(), np.zeros(hidden), w2.ravel(), np.zeros(p)])


def _train(params, x, y, w, hidden, config: MlpConfig):
    # Trial step is the Barzilai-Borwein estimate; Armijo backtracking keeps the
    # loss monotone.
    loss, grad = mlp_loss_and_grad(params, x, y, w, hidden, config.l2)
    if not math.isfinite(loss):
        raise NumericalError("non-finite loss at epoch 0")
    history = [loss]
    step = config.learning_rate
    for epoch in range(1, config.epochs + 1):
        gg = float(grad @ grad)
        if gg == 0.0:
            break
        while True:
            cand = params - step * grad
            new = mlp_loss(cand, x, y, w, hidden, config.l2)
            if new <= loss - 1e-4 * step * gg:
                break
            step *= 0.5
            if step < 1e-14:
                return params, history
        new_loss, new_grad = mlp_loss_and_grad(cand, x, y, w, hidden, config.l2)
        if not math.isfinite(new_loss):
            raise NumericalError(f"non-finite loss at epoch {epoch}")
        ds, dg = cand - params, new_grad - grad
        curv = float(ds @ dg)
        step = float(ds @ ds) / curv if curv > 0 else 2.0 * step
        params, loss, grad = cand, new_loss, new_grad
        history.append(loss)
    return params, history


def fit_mlp(stats, theta, weights, config: MlpConfig = MlpConfig(), kind: str = "mlp") -> MlpModel:
    """Single-hidden-layer network trained on the weighted squared loss.

    Inputs and targets are standardized with weighted moments before training
    so that ``learning_rate`` and ``l2`` are scale free.  Training is
    deterministic given ``config.seed``.
    """
    s, y, w = _check_inputs(stats, theta, weights)
    m, q = s.shape
    p = y.shape[1]
    hidden = config.units_for(q)
    if m < 10 * hidden:
        warnings.warn(f"only {m} weighted rows for {hidden} hidden units; the fit may be unstable",
                      RuntimeWarning, stacklevel=2)
    xc, xs = weighted_center_scale(s, w)
    yc, ys = weighted_center_scale(y, w)
    xs = np.where(xs > 0, xs, 1.0)
    ys = np.where(ys > 0, ys, 1.0)
    x = (s - xc) / xs
    t = (y - yc) / ys
    params, history = _train(init_mlp_params(q, hidden, p, config.seed), x, t, w, hidden, config)
    w1, b1, w2, b2 = (a.copy() for a in _unpack(params, q, hidden, p))
    return MlpModel(kind, w1, b1, w2, b2, xc, xs, yc, ys, tuple(history))


# --- conditional variance ---------------------------------------------------

@dataclass(frozen=True)
class VarianceModel:
    """Model of ``log sigma**2(s)``, one output per parameter."""

    model: RegressionModel

    def log_variance(self, stats) -> np.ndarray:
        return self.model.predict(stats)

    def sigma(self, stats) -> np.ndarray:
        return np.exp(0.5 * self.model.predict(stats))


def fit_log_variance(stats, residuals, weights, kind: str = "linear",
                     config: MlpConfig = MlpConfig()) -> VarianceModel:
    """Regress ``log(residual**2)`` on the statistics by weighted least squares.

    Squared residuals below 1e-300 are clamped to 1e-300 before the log.
    """
    s, r, w = _check_inputs(stats, residuals, weights)
    r2 = r * r
    if np.all(r2 < LOG_FLOOR):
        raise NumericalError("degenerate residuals; heteroscedastic adjustment unavailable")
    target = np.log(np.maximum(r2, LOG_FLOOR))
    if kind == "linear":
        return VarianceModel(fit_wls_linear(s, target, w))
    if kind == "ridge":
        return VarianceModel(fit_ridge(s, target, w, 1e-3))
    if kind == "mlp":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            return VarianceModel(fit_mlp(s, target, w, config))
    raise ConfigError(f"unknown variance model kind {kind!r}")
