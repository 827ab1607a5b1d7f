import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from abc_adjust.data import WeightedSample
from abc_adjust.errors import ConfigError, NumericalError
from abc_adjust.posterior import (credible_interval, kde_bandwidth, shrinkage_ratio, summarize, weighted_kde,
                                  weighted_mean_var, weighted_quantile)


def sample(values, weights=None):
    values = np.asarray(values, dtype=float)
    return WeightedSample(values, np.ones(values.shape[0]) if weights is None else weights)


def test_moments_match_loop(rng):
    x = rng.normal(size=(200, 2))
    w = rng.uniform(size=200)
    s = sample(x, w)
    mean, var = weighted_mean_var(s)
    wn = w / math.fsum(w)
    for j in range(2):
        m = math.fsum(wn[i] * x[i, j] for i in range(200))
        v = math.fsum(wn[i] * (x[i, j] - m) ** 2 for i in range(200))
        assert mean[j] == pytest.approx(m, abs=1e-14)
        assert var[j] == pytest.approx(v, abs=1e-14)


def test_equal_weights_give_plain_moments(rng):
    x = rng.normal(size=(100, 1))
    mean, var = weighted_mean_var(sample(x))
    assert mean[0] == pytest.approx(x.mean(), abs=1e-14)
    assert var[0] == pytest.approx(x.var(ddof=0), abs=1e-14)


def test_quantile_examples():
    s = sample([[3.0], [1.0], [4.0], [2.0]])
    assert weighted_quantile(s, 0.5) == 2.0
    assert weighted_quantile(s, 0.25) == 1.0
    assert weighted_quantile(s, 0.26) == 2.0
    assert weighted_quantile(s, 1.0) == 4.0
    s = sample([[5.0], [9.0]], [0.9, 0.1])
    assert weighted_quantile(s, 0.5) == 5.0
    assert weighted_quantile(s, 0.95) == 9.0


def test_quantile_tolerates_rounding_in_cumulative_weight():
    # ten weights of 0.1 do not sum to exactly 0.3 after three terms
    s = sample(np.arange(10.0)[:, None], np.full(10, 0.1))
    assert weighted_quantile(s, 0.3) == 2.0


def test_quantile_level_validation():
    s = sample([[1.0], [2.0]])
    for bad in (0.0, -0.1, 1.5):
        with pytest.raises(ConfigError):
            weighted_quantile(s, bad)
    with pytest.raises(ConfigError):
        credible_interval(s, 1.0)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 60))
def test_interval_ordering(seed, m):
    r = np.random.default_rng(seed)
    s = sample(r.normal(size=(m, 1)), r.uniform(0.01, 1, m))
    summ = summarize(s, (0.5, 0.8, 0.95))
    lo50, hi50 = summ.intervals[0.5]
    lo95, hi95 = summ.intervals[0.95]
    assert lo95[0] <= lo50[0] <= summ.median[0] <= hi50[0] <= hi95[0]


def test_summary_rows_keys():
    summ = summarize(WeightedSample(np.arange(20.0).reshape(10, 2), np.ones(10), param_names=("a", "b")))
    keys = [k for k, _ in summ.rows()]
    assert keys[:7] == ["a.mean", "a.variance", "a.sd", "a.median", "a.ci95.lower", "a.ci95.upper", "b.mean"]


# --- bandwidth ------------------------------------------------------------------------

def test_point_mass_bandwidth_is_an_error():
    with pytest.raises(NumericalError, match="degenerate sample"):
        kde_bandwidth(sample(np.full((5, 1), 2.0)))


def test_bandwidth_equal_weights_normal_draws():
    r = np.random.default_rng(7)
    m = 10_000
    h = kde_bandwidth(sample(r.standard_normal((m, 1))))
    assert h == pytest.approx(0.9 * m ** -0.2, rel=0.2)


def test_bandwidth_uses_effective_size(rng):
    x = rng.normal(size=(400, 1))
    w = np.zeros(400)
    w[:100] = 1.0
    h_w = kde_bandwidth(sample(x, w + 0.0))
    s = sample(x[:100])
    # the zero-weight rows do not enter the quantiles or the effective size
    assert h_w == pytest.approx(kde_bandwidth(s), rel=1e-12)
    assert s.effective_size == pytest.approx(100)


def test_bandwidth_falls_back_to_sd_when_iqr_vanishes():
    x = np.array([[0.0]] * 8 + [[1.0], [-1.0]])
    s = sample(x)
    sd = math.sqrt(0.2)
    assert kde_bandwidth(s) == pytest.approx(0.9 * sd * 10 ** -0.2, rel=1e-12)


# --- density ----------------------------------------------------------------------------

def test_single_point_gaussian_peak():
    s = WeightedSample(np.array([[0.0], [1e6]]), np.array([1.0, 0.0]))
    d = weighted_kde(s, grid=np.array([-1.0, 0.0, 1.0]), bandwidth=0.5)
    assert d.density[1] == pytest.approx(1 / (0.5 * math.sqrt(2 * math.pi)), rel=1e-14)
    assert d.density[0] == pytest.approx(d.density[2], rel=1e-14)


def test_symmetric_sample_gives_symmetric_density(rng):
    half = rng.normal(size=50)
    s = sample(np.concatenate([half, -half])[:, None])
    grid = np.linspace(-3, 3, 61)
    d = weighted_kde(s, grid=grid, bandwidth=0.3)
    np.testing.assert_allclose(d.density, d.density[::-1], rtol=1e-12)


@pytest.mark.parametrize("kernel", ["gaussian", "epanechnikov", "uniform"])
def test_density_integrates_to_one(rng, kernel):
    s = sample(rng.normal(size=(300, 1)), rng.uniform(size=300))
    d = weighted_kde(s, kernel=kernel)
    grid = d.grid
    integral = np.sum(0.5 * (d.density[1:] + d.density[:-1]) * np.diff(grid))
    assert integral == pytest.approx(1.0, abs=0.01)


def test_density_is_exactly_permutation_invariant(rng):
    x = rng.normal(size=(500, 1))
    w = rng.integers(1, 20, size=500).astype(float)
    perm = rng.permutation(500)
    grid = np.linspace(-4, 4, 101)
    a = weighted_kde(sample(x, w), grid=grid, bandwidth=0.25)
    b = weighted_kde(sample(x[perm], w[perm]), grid=grid, bandwidth=0.25)
    assert np.array_equal(a.density, b.density)


def test_mass_beyond_three_bandwidths_is_small():
    s = WeightedSample(np.array([[0.0]]), np.array([1.0]))
    h = 0.4
    fine = np.linspace(-10, 10, 200_001)
    d = weighted_kde(s, grid=fine, bandwidth=h)
    far = np.abs(fine) > 3 * h
    dx = fine[1] - fine[0]
    tail = np.sum(d.density[far]) * dx
    assert tail == pytest.approx(math.erfc(3 / math.sqrt(2)), rel=0.01)
    assert tail < 0.003


def test_grid_validation():
    s = sample([[0.0], [1.0]])
    with pytest.raises(ConfigError):
        weighted_kde(s, grid=np.array([1.0, 0.0]), bandwidth=0.1)
    with pytest.raises(ConfigError):
        weighted_kde(s, bandwidth=0.0)
    with pytest.raises(ConfigError):
        weighted_kde(s, bandwidth=0.1, kernel="cosine")


# --- shrinkage --------------------------------------------------------------------------

def test_shrinkage_examples():
    rej = sample([[-2.0], [0.0], [2.0]])
    assert shrinkage_ratio(sample([[-1.0], [0.0], [1.0]]), rej)[0] == pytest.approx(0.25)
    assert shrinkage_ratio(rej, rej)[0] == 1.0
    with pytest.raises(NumericalError):
        shrinkage_ratio(rej, sample([[1.0], [1.0], [1.0]]))
    with pytest.raises(ConfigError):
        shrinkage_ratio(sample([[1.0], [2.0]]), rej)
