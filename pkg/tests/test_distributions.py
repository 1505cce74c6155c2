import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from riskmin.distributions import (
    DiscreteJoint,
    GaussianLinearModel,
    GaussianMixture,
    SingularSystemError,
    ZeroMarginalError,
    distribution_from_dict,
    downsample_operator,
    gaussian_linear_posterior,
    gmm_log_density,
    gmm_score,
    make_noise2noise_pairs,
    pixel_variance,
    posterior_mc_stats,
    sample_joint,
    smooth_prior_cov,
)

seeds = st.integers(0, 2**32 - 1)


# ---------------------------------------------------------------- finite joints


def test_single_row_conditional():
    j = DiscreteJoint([[0.0]], [0.0, 1.0], [[0.3, 0.7]])
    assert np.allclose(j.conditional(0), [0.3, 0.7])


def test_independent_conditional_is_marginal():
    j = DiscreteJoint.independent([0.2, 0.5, 0.3], [0.1, 0.6, 0.3])
    for i in range(3):
        assert np.allclose(j.conditional(i), [0.1, 0.6, 0.3], atol=1e-15)


@settings(max_examples=50, deadline=None)
@given(seeds)
def test_conditional_matches_brute_normalisation(seed):
    gen = np.random.default_rng(seed)
    j = DiscreteJoint.random(gen, 5, 4)
    for i in range(5):
        row = [j.prob[i, k] for k in range(4)]
        total = sum(row)
        assert np.allclose(j.conditional(i), [r / total for r in row], atol=1e-15)
        assert abs(j.conditional(i).sum() - 1) < 1e-12


def test_invalid_joints_rejected():
    with pytest.raises(ValueError):
        DiscreteJoint([0.0], [0.0, 1.0], [[0.5, 0.6]])
    with pytest.raises(ValueError):
        DiscreteJoint([0.0], [0.0, 1.0], [[-0.1, 1.1]])
    with pytest.raises(ZeroMarginalError):
        DiscreteJoint([0.0, 1.0], [0.0, 1.0], [[0.5, 0.5], [0.0, 0.0]])


def test_sample_joint_frequencies():
    j = DiscreteJoint([0.0, 1.0], [0.0, 1.0], [[0.1, 0.2], [0.3, 0.4]])
    draws = sample_joint(j, np.random.default_rng(0), 100_000)
    freq = np.zeros((2, 2))
    np.add.at(freq, (draws[:, 0], draws[:, 1]), 1)
    assert np.max(np.abs(freq / len(draws) - j.prob)) < 0.01


def test_sample_joint_degenerate_and_deterministic():
    j = DiscreteJoint.deterministic([0.0], [0.0, 1.0], [1], [1.0])
    draws = sample_joint(j, np.random.default_rng(1), 50)
    assert np.all(draws == [0, 1])
    r = DiscreteJoint.random(np.random.default_rng(2), 3, 3)
    a = sample_joint(r, np.random.default_rng(7), 100)
    b = sample_joint(r, np.random.default_rng(7), 100)
    assert np.array_equal(a, b)


def test_joint_dict_round_trip():
    j = DiscreteJoint.random(np.random.default_rng(3), 4, 3)
    k = distribution_from_dict(j.to_dict())
    assert np.array_equal(j.prob, k.prob) and np.array_equal(j.x_support, k.x_support)


# ---------------------------------------------------------------- mixtures


def test_gaussian_score_examples():
    g = GaussianMixture([1.0], [[0.0]], [1.0])
    assert gmm_score(g, 2.0) == pytest.approx(-2.0)
    sym = GaussianMixture([0.5, 0.5], [[-1.5], [1.5]], [0.3, 0.3])
    assert gmm_score(sym, 0.0) == pytest.approx(0.0, abs=1e-15)


@settings(max_examples=100, deadline=None)
@given(seeds)
def test_score_matches_finite_difference(seed):
    gen = np.random.default_rng(seed)
    g = GaussianMixture.random(gen, 3)
    y = gen.uniform(-4, 4)
    h = 1e-5
    fd = (gmm_log_density(g, y + h) - gmm_log_density(g, y - h)) / (2 * h)
    assert abs(gmm_score(g, y) - fd) < 1e-6


def test_score_2d_matches_finite_difference():
    gen = np.random.default_rng(5)
    g = GaussianMixture.random(gen, 3, dim=2)
    y = gen.normal(size=2)
    fd = np.array([(g.log_density(y + e) - g.log_density(y - e)) / 2e-5 for e in np.eye(2) * 1e-5])
    assert np.allclose(g.score(y), fd, atol=1e-6)


def test_widened_mixture_matches_samples():
    from scipy.stats import kstest

    from riskmin.denoise_score import mixture_cdf

    gen = np.random.default_rng(11)
    g = GaussianMixture([0.3, 0.7], [[-1.0], [2.0]], [0.2, 0.5])
    y = g.sample(gen, 100_000)[:, 0] + 0.5 * gen.standard_normal(100_000)
    stat = kstest(y, lambda t: mixture_cdf(g.widen(0.25), t)).statistic
    assert stat < 0.02


def test_mixture_validation():
    with pytest.raises(ValueError):
        GaussianMixture([0.5, 0.6], [[0.0], [1.0]], [1.0, 1.0])
    with pytest.raises(ValueError):
        GaussianMixture([1.0], [[0.0]], [0.0])


# ---------------------------------------------------------------- linear gaussian


def test_two_pixel_posterior():
    glm = GaussianLinearModel([0.0, 0.0], np.eye(2), [[1.0, 1.0]], 0.0)
    mean, cov = gaussian_linear_posterior(glm, np.array([2.0]))
    assert np.allclose(mean, [1.0, 1.0])
    assert np.allclose(cov, [[0.5, -0.5], [-0.5, 0.5]])
    assert np.allclose(pixel_variance(glm), [0.5, 0.5])


def test_identity_operator_fully_observed():
    glm = GaussianLinearModel(np.zeros(3), smooth_prior_cov(3), np.eye(3), 0.0)
    y = np.array([0.3, -1.0, 2.0])
    assert np.allclose(glm.posterior_mean(y), y, atol=1e-9)
    assert np.allclose(pixel_variance(glm), 0.0, atol=1e-9)
    _, var = posterior_mc_stats(glm, y, 10, np.random.default_rng(0))
    assert np.allclose(var, 0.0, atol=1e-12)


def test_posterior_matches_conditional_monte_carlo():
    # for jointly Gaussian (x, y) the residual x - E[x|y] is independent of y,
    # so its sample covariance over joint draws estimates the posterior covariance
    d = 8
    glm = GaussianLinearModel(np.zeros(d), smooth_prior_cov(d), downsample_operator(d, 4), 0.01)
    gen = np.random.default_rng(0)
    x = glm.sample_prior(gen, 1_000_000)
    y = glm.observe(x, gen)
    cov_mc = np.cov(x - y @ glm.gain().T, rowvar=False)
    assert np.allclose(np.diag(cov_mc), pixel_variance(glm), rtol=0.01)
    assert np.max(np.abs(cov_mc - glm.posterior_cov())) < 0.01 * np.max(np.abs(glm.posterior_cov()))


@settings(max_examples=30, deadline=None)
@given(seeds, st.sampled_from([0.0, 0.1]))
def test_posterior_cov_psd_and_consistent(seed, noise_var):
    gen = np.random.default_rng(seed)
    d = 8
    A = gen.normal(size=(2, d))
    glm = GaussianLinearModel(gen.normal(size=d), smooth_prior_cov(d), A, noise_var)
    cov = glm.posterior_cov()
    assert np.allclose(cov, cov.T, atol=0)
    assert np.linalg.eigvalsh(cov).min() >= -1e-10
    if noise_var == 0:
        y = gen.normal(size=2)
        assert np.allclose(A @ glm.posterior_mean(y), y, atol=1e-9)


def test_singular_system_reports_condition():
    glm = GaussianLinearModel(np.zeros(2), np.eye(2), [[1.0, 0.0], [1.0, 0.0]], 1e-20)
    with pytest.raises(SingularSystemError) as e:
        glm.gain()
    assert e.value.cond > 1e12


def test_operator_shape_rules():
    with pytest.raises(ValueError):
        GaussianLinearModel(np.zeros(2), np.eye(2), np.ones((3, 2)))
    with pytest.raises(ValueError):
        GaussianLinearModel(np.zeros(2), [[1.0, 0.1], [0.0, 1.0]], np.ones((1, 2)))


def test_mc_variance_within_thirty_percent():
    glm = GaussianLinearModel([0.0, 0.0], np.eye(2), [[1.0, 1.0]], 0.0)
    gen = np.random.default_rng(4)
    hits = 0
    for _ in range(200):
        _, var = posterior_mc_stats(glm, np.array([2.0]), 100, gen)
        hits += np.all(np.abs(var - 0.5) < 0.15)
    assert hits / 200 > 0.95


def test_mc_variance_spread_halves_with_double_samples():
    glm = GaussianLinearModel([0.0, 0.0], np.eye(2), [[1.0, 1.0]], 0.0)
    gen = np.random.default_rng(8)
    spread = {}
    for n in (50, 100):
        est = np.array([posterior_mc_stats(glm, np.array([0.0]), n, gen)[1][0] for _ in range(2000)])
        spread[n] = est.var()
    assert 0.4 < spread[100] / spread[50] < 0.6


def test_glm_dict_round_trip():
    glm = GaussianLinearModel(np.zeros(4), smooth_prior_cov(4), downsample_operator(4, 2), 0.1)
    back = distribution_from_dict(glm.to_dict())
    assert np.array_equal(back.A, glm.A) and back.noise_var == glm.noise_var


# ---------------------------------------------------------------- noise pairs


def test_noise_pairs_properties():
    g = GaussianMixture([1.0], [[0.0]], [1.0])
    clean = make_noise2noise_pairs(g.sample, 0.5, 0.0, 100, seed=1)
    assert np.array_equal(clean.x, clean.s)
    p = make_noise2noise_pairs(g.sample, 0.5, 0.7, 10_000, seed=2)
    n1, n2 = (p.y - p.s)[:, 0], (p.x - p.s)[:, 0]
    assert abs(np.corrcoef(n1, n2)[0, 1]) < 0.02
    assert abs(n2.mean()) < 3 * 0.7 / np.sqrt(10_000)
    with pytest.raises(ValueError):
        make_noise2noise_pairs(g.sample, -1.0, 0.1, 10, seed=0)
