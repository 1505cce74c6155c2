import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from riskmin.distributions import pixel_variance
from riskmin.models import TrainConfig, predict
from riskmin.uncertainty import (
    StageConfig,
    UncertaintyConfig,
    VarianceModel,
    build_task,
    lift,
    mc_pixel_variance,
    metrics,
    row,
    train_mean,
    train_var,
    var_label,
)

seeds = st.integers(0, 2**32 - 1)


def _stage(iterations, lr=1e-3, batch=128):
    return StageConfig(hidden=(32, 32), train=TrainConfig(optimizer="adamw", lr=lr, batch_size=batch, iterations=iterations, checkpoint_every=iterations // 4))


def _metrics_by_loop(pred, ref):
    """Second, loop-based implementation of mse / nmse / psnr."""
    p, r = np.asarray(pred).ravel().tolist(), np.asarray(ref).ravel().tolist()
    sq = 0.0
    energy = 0.0
    peak = 0.0
    for a, b in zip(p, r):
        sq += (a - b) * (a - b)
        energy += b * b
        peak = max(peak, abs(b))
    mse = sq / len(r)
    return 10 * math.log10(peak * peak / mse), mse, sq / energy


# ---------------------------------------------------------------- labels and metrics


def test_var_label_examples():
    assert np.array_equal(var_label([[1.0, 2.0]], [[1.0, 2.0]]), [[0.0, 0.0]])
    assert np.array_equal(var_label([[1.0, -2.0]], [[0.0, 0.0]]), [[1.0, 4.0]])
    with pytest.raises(ValueError):
        var_label([[1.0]], [[1.0, 2.0]])


def test_lift_repeats_each_measurement():
    assert lift(np.array([[1.0, 2.0]]), 3).tolist() == [[1, 1, 1, 2, 2, 2]]


def test_metric_examples():
    ref = np.ones(5)
    same = metrics(ref, ref)
    assert same.mse == 0 and same.nmse == 0 and same.psnr == math.inf
    off = metrics(ref + 1, ref)
    assert off.mse == 1.0 and off.nmse == 1.0 and off.psnr == pytest.approx(0.0)
    with pytest.raises(ZeroDivisionError):
        metrics(np.ones(3), np.zeros(3))
    with pytest.raises(ValueError):
        metrics(np.ones(3), np.ones(4))


@settings(max_examples=50, deadline=None)
@given(seeds)
def test_metrics_match_second_implementation(seed):
    gen = np.random.default_rng(seed)
    ref = gen.normal(size=(7, 3))
    pred = ref + gen.normal(scale=0.3, size=ref.shape)
    got = metrics(pred, ref)
    psnr, mse, nmse = _metrics_by_loop(pred, ref)
    assert got.mse == pytest.approx(mse, rel=1e-12)
    assert got.nmse == pytest.approx(nmse, rel=1e-12)
    assert got.psnr == pytest.approx(psnr, rel=1e-12)


# ---------------------------------------------------------------- task and references


def test_noise_free_task_is_consistent():
    task = build_task(0, n_train=100, n_test=10)
    assert np.max(np.abs(task.x_train @ task.glm.A.T - task.y_train)) < 1e-12
    assert task.factor == 4 and task.y_train.shape == (100, 2)


def test_task_is_deterministic():
    a, b = build_task(5, n_train=50, n_test=5), build_task(5, n_train=50, n_test=5)
    assert np.array_equal(a.x_train, b.x_train) and np.array_equal(a.y_test, b.y_test)


def test_mc_variance_nmse_near_two_over_n():
    task = build_task(0, n_train=10, n_test=4000)
    oracle = pixel_variance(task.glm)
    mc = mc_pixel_variance(task.glm, task.y_test, 100, seed=1)
    err = np.sum((mc - oracle) ** 2) / np.sum(np.broadcast_to(oracle, mc.shape) ** 2)
    # sample variance of n Gaussian draws has relative variance 2/n (1/n normalisation
    # adds a (1/n)^2 bias term, negligible here)
    assert 0.016 < err < 0.024
    with pytest.raises(ValueError):
        mc_pixel_variance(task.glm, task.y_test, 1, seed=0)


def test_var_label_expectation_is_variance_plus_bias():
    task = build_task(0, n_train=10, n_test=1)
    glm, y = task.glm, task.y_test
    offset = 0.05 * np.sign(np.arange(glm.d) - 3.5)
    gen = np.random.default_rng(1)
    post = glm.posterior_mean(y)[0]
    L = np.linalg.cholesky(glm.posterior_cov() + 1e-12 * np.eye(glm.d))
    draws = post + gen.standard_normal((200_000, glm.d)) @ L.T
    emp = var_label(draws, np.broadcast_to(post + offset, draws.shape)).mean(axis=0)
    assert np.allclose(emp, pixel_variance(glm) + offset**2, rtol=0.02, atol=1e-4)


# ---------------------------------------------------------------- learned stages


def test_identity_operator_mean_is_identity():
    task = build_task(0, n_train=10000, n_test=500, identity=True)
    f_mean, _ = train_mean(task, _stage(4000, lr=3e-3))
    assert metrics(predict(f_mean, task.y_test), task.x_test).nmse < 1e-3


def test_identity_operator_variance_is_zero():
    task = build_task(0, n_train=2000, n_test=200, identity=True)
    oracle_mean = task.glm.posterior_mean
    f_var, _ = train_var(task, oracle_mean, _stage(2000, lr=3e-3))
    assert pixel_variance(task.glm).max() < 1e-9
    assert f_var(task.y_test).mean() < 1e-2


def test_variance_output_clamped():
    task = build_task(0, n_train=200, n_test=50)
    f_var, _ = train_var(task, task.glm.posterior_mean, _stage(4))
    assert f_var.net.sizes[0] == 2 * task.glm.d
    raw = VarianceModel(f_var.net, task.glm.posterior_mean, task.factor, clamp=False)
    # push the output bias negative so clamping has something to do
    f_var.net.parameters()[-1].data[:] = -1.0
    assert np.all(f_var(task.y_test) >= 0)
    assert np.any(raw(task.y_test) < 0)


def test_plug_in_oracle_variance_converges():
    task = build_task(0, n_train=20000, n_test=1000)
    oracle_mean = task.glm.posterior_mean
    f_var, _ = train_var(task, oracle_mean, _stage(4000, batch=256), plug_in=oracle_mean)
    ref = np.broadcast_to(pixel_variance(task.glm), task.x_test.shape)
    assert metrics(f_var(task.y_test), ref).nmse < 0.1


def test_row_lookup():
    res = {"rows": [{"comparison": "a", "nmse": 1.0}]}
    assert row(res, "a")["nmse"] == 1.0
    with pytest.raises(KeyError):
        row(res, "b")


def test_config_defaults_match_task_shape():
    cfg = UncertaintyConfig()
    assert (cfg.d, cfg.factor, cfg.n_train, cfg.mc_samples) == (8, 4, 20000, 100)
