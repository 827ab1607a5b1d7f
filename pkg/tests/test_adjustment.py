import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from abc_adjust.adjustment import (AdjustmentConfig, adjust_heteroscedastic, adjust_homoscedastic, infer,
                                   method_config, transform_back, transform_forward)
from abc_adjust.data import ObservedSummaries, SimulationTable, Transform, TransformSpec, WeightedSample
from abc_adjust.errors import ConfigError, DataError, NumericalError
from abc_adjust.posterior import weighted_mean_var
from abc_adjust.regression import LinearModel, VarianceModel, fit_log_variance, fit_wls_linear
from abc_adjust.rejection import RejectionConfig
from abc_adjust.toys import ToySpec, simulate

LOGIT = TransformSpec((Transform("logit", 0.0, 1.0),))
LOG = TransformSpec((Transform("log"),))


def make_table(theta, stats):
    return SimulationTable(theta, stats, tuple(f"param_{j}" for j in range(theta.shape[1])),
                           tuple(f"stat_{k}" for k in range(stats.shape[1])))


def affine(intercept, coef):
    coef = np.atleast_2d(np.asarray(coef, dtype=float))
    return LinearModel("linear", np.atleast_1d(np.asarray(intercept, dtype=float)), coef,
                       np.zeros(coef.shape[1]), np.ones(coef.shape[1]))


# --- transforms -----------------------------------------------------------------

def test_transform_examples():
    assert transform_forward([0.5], LOGIT)[0, 0] == 0.0
    assert transform_forward([math.e], LOG)[0, 0] == pytest.approx(1.0, abs=1e-15)
    assert transform_back([0.0], LOGIT)[0, 0] == 0.5
    spec = TransformSpec((Transform("logit", 2.0, 6.0),))
    assert transform_forward([4.0], spec)[0, 0] == pytest.approx(0.0, abs=1e-15)


@settings(max_examples=100, deadline=None)
@given(st.floats(1e-6, 1 - 1e-6))
def test_logit_round_trip(x):
    assert transform_back(transform_forward([x], LOGIT), LOGIT)[0, 0] == pytest.approx(x, rel=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.floats(1e-300, 1e300))
def test_log_round_trip(x):
    assert transform_back(transform_forward([x], LOG), LOG)[0, 0] == pytest.approx(x, rel=1e-12)


@pytest.mark.parametrize("phi", [1000.0, -1000.0, 1e308, -1e308, 40.0, -800.0])
def test_back_transform_saturates_inside_support(phi):
    v = transform_back([phi], LOGIT)[0, 0]
    assert 0.0 < v < 1.0
    v = transform_back([phi], LOG)[0, 0]
    assert 0.0 < v < math.inf


@pytest.mark.parametrize("bad", [0.0, 1.0, -0.2, 1.5, float("nan")])
def test_logit_support_error_names_location(bad):
    with pytest.raises(DataError, match="row 2, column 1"):
        transform_forward([0.5, bad], LOGIT)


def test_log_support_error():
    with pytest.raises(DataError, match="positive"):
        transform_forward([1.0, 0.0], LOG)


def test_transform_width_mismatch():
    with pytest.raises(Exception):
        transform_forward(np.ones((3, 2)), LOGIT)


# --- adjustment formulas ----------------------------------------------------------

def _sample(rng, m=40, p=2):
    return WeightedSample(rng.normal(size=(m, p)), rng.uniform(size=m))


def test_homoscedastic_matches_loop_oracle(rng):
    sample = _sample(rng)
    stats = rng.normal(size=(40, 3))
    obs = rng.normal(size=3)
    model = fit_wls_linear(stats, sample.values, sample.weights)
    out = adjust_homoscedastic(sample, model, stats, ObservedSummaries(obs))
    for i in range(sample.m):
        for j in range(sample.p):
            m_obs = model.intercept[j] + sum(model.coef[j, k] * obs[k] for k in range(3))
            m_i = model.intercept[j] + sum(model.coef[j, k] * stats[i, k] for k in range(3))
            assert out.values[i, j] == pytest.approx(m_obs + sample.values[i, j] - m_i, abs=1e-12)
    assert out.label == "homoscedastic"


def test_heteroscedastic_matches_loop_oracle(rng):
    sample = _sample(rng)
    stats = rng.normal(size=(40, 2))
    obs = rng.normal(size=2)
    mean = affine([0.3, -1.0], [[1.0, 2.0], [0.5, -0.5]])
    var = VarianceModel(affine([0.1, -0.4], [[0.7, 0.2], [-0.3, 0.1]]))
    out = adjust_heteroscedastic(sample, mean, var, stats, obs)
    for i in range(sample.m):
        for j in range(sample.p):
            m_obs = mean.intercept[j] + mean.coef[j] @ obs
            m_i = mean.intercept[j] + mean.coef[j] @ stats[i]
            sd_obs = math.exp(0.5 * (var.model.intercept[j] + var.model.coef[j] @ obs))
            sd_i = math.exp(0.5 * (var.model.intercept[j] + var.model.coef[j] @ stats[i]))
            expected = m_obs + sd_obs / sd_i * (sample.values[i, j] - m_i)
            assert out.values[i, j] == pytest.approx(expected, abs=1e-12)


def test_constant_variance_reduces_to_homoscedastic(rng):
    sample = _sample(rng)
    stats = rng.normal(size=(40, 2))
    obs = rng.normal(size=2)
    mean = fit_wls_linear(stats, sample.values, sample.weights)
    const = VarianceModel(affine([0.8, -2.0], np.zeros((2, 2))))
    a = adjust_heteroscedastic(sample, mean, const, stats, obs)
    b = adjust_homoscedastic(sample, mean, stats, obs)
    assert np.array_equal(a.values, b.values)


def test_rows_at_the_observation_are_unchanged(rng):
    sample = _sample(rng, m=10, p=1)
    obs = np.array([0.4, -1.2])
    stats = np.tile(obs, (10, 1))
    mean = affine([1.0], [[2.0, -3.0]])
    var = VarianceModel(affine([0.0], [[1.0, 1.0]]))
    np.testing.assert_allclose(adjust_homoscedastic(sample, mean, stats, obs).values, sample.values, atol=1e-12)
    np.testing.assert_allclose(adjust_heteroscedastic(sample, mean, var, stats, obs).values, sample.values,
                               atol=1e-12)


def test_sigma_floor_names_row(rng):
    sample = _sample(rng, m=5, p=1)
    stats = np.array([[0.0], [0.0], [-100.0], [0.0], [0.0]])
    var = VarianceModel(affine([0.0], [[1.0]]))
    with pytest.raises(NumericalError, match="row 3"):
        adjust_heteroscedastic(sample, affine([0.0], [[1.0]]), var, stats, [0.0])


def test_shape_mismatch(rng):
    sample = _sample(rng, m=5, p=1)
    with pytest.raises(DataError):
        adjust_homoscedastic(sample, affine([0.0], [[1.0]]), np.zeros((4, 1)), [0.0])
    with pytest.raises(DataError):
        adjust_homoscedastic(sample, affine([0.0], [[1.0]]), np.zeros((5, 1)), [0.0, 1.0])


# --- end to end ---------------------------------------------------------------------

@pytest.fixture(scope="module")
def toy():
    return simulate(ToySpec("linear_gaussian_multi", n_noise=2, seed=5), 20_000)


@pytest.mark.parametrize("method", ["loclinear", "ridge", "loclinear-hetero", "ridge-hetero"])
def test_weights_unchanged_and_variance_shrinks(toy, method):
    rej = RejectionConfig(acceptance_rate=0.05)
    res = infer(toy.table, toy.observed, rej, method_config(method))
    assert np.array_equal(res.posterior.weights, res.rejection.sample.weights)
    _, v_adj = weighted_mean_var(res.posterior)
    _, v_rej = weighted_mean_var(res.rejection.sample)
    assert v_adj[0] < v_rej[0]


def test_rejection_mode_passes_sample_through(toy):
    res = infer(toy.table, toy.observed, RejectionConfig(acceptance_rate=0.02), method_config("rejection"))
    assert res.posterior is res.rejection.sample
    assert res.mean_model is None


def test_location_equivariance(rng):
    theta = rng.normal(size=(500, 1))
    stats = theta + 0.3 * rng.normal(size=(500, 2))
    obs = ObservedSummaries(np.array([0.2, 0.1]))
    rej = RejectionConfig(acceptance_rate=0.2)
    cfg = method_config("loclinear-hetero")
    a = infer(make_table(theta, stats), obs, rej, cfg).posterior.values
    b = infer(make_table(theta + 7.5, stats), obs, rej, cfg).posterior.values
    np.testing.assert_allclose(b, a + 7.5, atol=1e-10)


@pytest.mark.parametrize("method", ["loclinear", "loclinear-hetero"])
def test_transformed_adjustment_stays_in_support(rng, method):
    theta = rng.uniform(0.001, 0.999, size=(3000, 1))
    stats = theta + 0.4 * rng.normal(size=(3000, 1))
    table = make_table(theta, stats)
    for s_obs in (-5.0, 0.5, 8.0):
        res = infer(table, ObservedSummaries(np.array([s_obs])), RejectionConfig(acceptance_rate=0.1),
                    method_config(method, LOGIT))
        v = res.posterior.values
        assert np.all((v > 0) & (v < 1))


def test_variance_model_is_fitted_on_transformed_residuals(rng):
    theta = rng.uniform(0.05, 0.95, size=(2000, 1))
    stats = theta + 0.2 * rng.normal(size=(2000, 1))
    table = make_table(theta, stats)
    obs = ObservedSummaries(np.array([0.5]))
    res = infer(table, obs, RejectionConfig(acceptance_rate=0.2), method_config("loclinear-hetero", LOGIT))
    rs = res.rejection
    phi = transform_forward(rs.sample.values, LOGIT)
    st_ = table.stats[rs.accepted_indices]
    vm = fit_log_variance(st_, phi - res.mean_model.predict(st_), rs.sample.weights)
    np.testing.assert_allclose(vm.model.coef, res.variance_model.model.coef, atol=1e-12)


# --- method names ---------------------------------------------------------------------

def test_method_config_names():
    assert method_config("rejection").mode == "none"
    c = method_config("loclinear")
    assert (c.mode, c.mean_kind) == ("homoscedastic", "linear")
    assert method_config("loclinear-homo") == c
    c = method_config("neuralnet-hetero")
    assert (c.mode, c.mean_kind, c.variance_kind) == ("heteroscedastic", "mlp", "mlp")
    c = method_config("ridge-hetero", ridge_lambda=0.5)
    assert (c.variance_kind, c.ridge_lambda) == ("linear", 0.5)


@pytest.mark.parametrize("bad", ["rejection-hetero", "loess", "loclinear-fancy", ""])
def test_method_config_rejects_unknown(bad):
    with pytest.raises(ConfigError):
        method_config(bad)


def test_adjustment_config_validation():
    with pytest.raises(ConfigError):
        AdjustmentConfig(mode="heteroscedastic")
    with pytest.raises(ConfigError):
        AdjustmentConfig(mean_kind="loess")
