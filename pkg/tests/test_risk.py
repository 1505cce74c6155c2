import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from riskmin.distributions import DiscreteJoint, GaussianLinearModel, smooth_prior_cov
from riskmin.risk import (
    CROSS_ENTROPY,
    IDENTITY,
    INEQ_AA,
    INEQ_BB,
    L2,
    OUT_OF_DOMAIN,
    GridSpec,
    LabelMap,
    LossFn,
    conditional_risk,
    label_table,
    loss_eval,
    loss_hypothesis_probe,
    simplex_lattice,
    theorem2_gap_check,
    zstar_bruteforce,
    zstar_closed_form,
)

seeds = st.integers(0, 2**32 - 1)


def test_loss_examples():
    assert loss_eval(L2, [1.0, 2.0], [1.0, 2.0]) == 0.0
    assert loss_eval(CROSS_ENTROPY, [0.5, 0.5], [0.5, 0.5]) == pytest.approx(math.log(2))
    assert loss_eval(CROSS_ENTROPY, [1.2, -0.2], [0.5, 0.5]) is OUT_OF_DOMAIN
    assert float(OUT_OF_DOMAIN) == math.inf
    with pytest.raises(ValueError):
        loss_eval(L2, [1.0], [1.0, 2.0])


def test_ce_zero_log_zero():
    assert loss_eval(CROSS_ENTROPY, [1.0, 0.0], [1.0, 0.0]) == 0.0
    assert loss_eval(CROSS_ENTROPY, [1.0, 0.0], [0.5, 0.5]) == math.inf


@settings(max_examples=50, deadline=None)
@given(seeds)
def test_ce_expected_over_onehots_is_entropy(seed):
    q = np.random.default_rng(seed).dirichlet(np.ones(4))
    avg = sum(q[i] * loss_eval(CROSS_ENTROPY, q, np.eye(4)[i]) for i in range(4))
    assert avg == pytest.approx(-np.sum(q * np.log(q)), abs=1e-12)


def test_conditional_risk_examples():
    assert conditional_risk(L2, [0.5], [0.5, 0.5], IDENTITY, [0.0], [0.0, 1.0]) == pytest.approx(0.25)
    q = np.array([0.2, 0.3, 0.5])
    assert conditional_risk(CROSS_ENTROPY, q, q, IDENTITY, [0.0], np.eye(3)) == pytest.approx(-np.sum(q * np.log(q)))


@settings(max_examples=50, deadline=None)
@given(seeds)
def test_conditional_risk_matches_double_loop(seed):
    gen = np.random.default_rng(seed)
    xs = gen.normal(size=(5, 2))
    cond = gen.dirichlet(np.ones(5))
    z = gen.normal(size=2)
    naive = 0.0
    for j in range(5):
        naive += cond[j] * sum((z[k] - xs[j][k]) ** 2 for k in range(2))
    assert conditional_risk(L2, z, cond, IDENTITY, [0.0], xs) == pytest.approx(naive, abs=1e-12)


def test_closed_form_examples():
    assert zstar_closed_form(L2, [0.3, 0.7], IDENTITY, [0.0], [0.0, 1.0]) == pytest.approx([0.7])
    assert np.allclose(zstar_closed_form(CROSS_ENTROPY, [0.7, 0.3], IDENTITY, [0.0], np.eye(2)), [0.7, 0.3])
    with pytest.raises(ValueError, match="bruteforce"):
        zstar_closed_form(CROSS_ENTROPY, [0.7, 0.3], IDENTITY, [0.0], [[0.2], [0.9]])


def test_closed_form_squared_residual_is_posterior_variance():
    # finite quadrature stand-in: x on a fine grid weighted by the exact 1-D posterior
    glm = GaussianLinearModel([0.0, 0.0], smooth_prior_cov(2), [[0.5, 0.5]], 0.0)
    mean, cov = glm.posterior_mean(np.array([0.4])), glm.posterior_cov()
    direction = np.array([1.0, -1.0]) / np.sqrt(2)
    sd = np.sqrt(direction @ cov @ direction)
    t = np.linspace(-8, 8, 4001)
    xs = mean[None] + (sd * t)[:, None] * direction[None]
    w = np.exp(-0.5 * t**2)
    w /= w.sum()
    g = LabelMap("squared_residual", mean_fn=lambda y: mean)
    z = zstar_closed_form(L2, w, g, [0.4], xs)
    assert np.allclose(z, np.diag(cov), rtol=1e-6)


def test_bruteforce_matches_closed_form():
    z = zstar_bruteforce(L2, [0.3, 0.7], IDENTITY, [0.0], [0.0, 1.0], GridSpec((0.0,), (1.0,), 1e-3))
    assert abs(z[0] - 0.7) <= 1e-3
    q = np.array([0.2, 0.3, 0.5])
    zc = zstar_bruteforce(CROSS_ENTROPY, q, IDENTITY, [0.0], np.eye(3), GridSpec(step=0.01, simplex=True, dim=3))
    assert np.max(np.abs(zc - q)) <= 0.01


def test_bruteforce_deterministic_mapping():
    # x = h(y): a single outcome, so z* is the label itself
    z = zstar_bruteforce(L2, [0.0, 1.0, 0.0], IDENTITY, [0.0], [0.1, 0.4, 0.9], GridSpec((0.0,), (1.0,), 0.01))
    assert z[0] == pytest.approx(0.4, abs=1e-9)


def test_bruteforce_empty_grid():
    with pytest.raises(ValueError):
        zstar_bruteforce(L2, [1.0], IDENTITY, [0.0], [0.0], GridSpec((1.0,), (0.0,), 0.1))


def test_simplex_lattice_lexicographic():
    pts = simplex_lattice(3, 0.5)
    assert pts.tolist() == [[0, 0, 1], [0, 0.5, 0.5], [0, 1, 0], [0.5, 0, 0.5], [0.5, 0.5, 0], [1, 0, 0]]


@settings(max_examples=25, deadline=None)
@given(seeds, st.sampled_from(["l2", "cross_entropy"]))
def test_closed_form_is_minimiser(seed, kind):
    gen = np.random.default_rng(seed)
    cond = gen.dirichlet(np.ones(4))
    if kind == "l2":
        xs, loss = gen.normal(size=(4, 2)), L2
        probes = gen.normal(size=(1000, 2)) * 2
    else:
        xs, loss = np.eye(4), CROSS_ENTROPY
        probes = gen.dirichlet(np.ones(4), size=1000)
    zs = zstar_closed_form(loss, cond, IDENTITY, [0.0], xs)
    best = conditional_risk(loss, zs, cond, IDENTITY, [0.0], xs)
    for z in probes:
        assert best <= conditional_risk(loss, z, cond, IDENTITY, [0.0], xs) + 1e-9


def test_label_maps():
    g = LabelMap("score_label", noise_var=0.5)
    assert np.allclose(g([1.0], [0.0]), [2.0])
    with pytest.raises(ValueError):
        LabelMap("score_label")
    with pytest.raises(ValueError):
        LabelMap("squared_residual")
    j = DiscreteJoint.random(np.random.default_rng(0), 3, 2)
    assert label_table(j, IDENTITY).shape == (3, 2, 1)


# ---------------------------------------------------------------- constant gap


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_gap_is_constant(seed):
    gen = np.random.default_rng(seed)
    j = DiscreteJoint.random(gen, 6, 5, x_support=gen.normal(size=(5, 2)))
    rep = theorem2_gap_check(j, IDENTITY, 20, gen)
    assert rep.max_deviation < 1e-10
    assert abs(rep.c_emp - rep.c_theory) < 1e-10


def test_gap_minimiser_probe_and_deterministic_joint():
    gen = np.random.default_rng(1)
    j = DiscreteJoint.random(gen, 4, 3)
    zstar = np.einsum("ij,ijw->iw", j.conditionals(), label_table(j, IDENTITY))
    rep = theorem2_gap_check(j, IDENTITY, np.stack([zstar, zstar + 1.0]))
    assert rep.j_zstar[0] == pytest.approx(0.0, abs=1e-15)
    assert rep.j_g[0] == pytest.approx(rep.c_theory, abs=1e-12)

    det = DiscreteJoint.deterministic([0.0, 1.0, 2.0], [[0.5], [-1.0]], [1, 0, 1], [0.2, 0.5, 0.3])
    rep = theorem2_gap_check(det, IDENTITY, 5, gen)
    assert rep.c_theory == pytest.approx(0.0, abs=1e-15)


def test_gap_rejects_non_l2():
    j = DiscreteJoint.random(np.random.default_rng(0), 3, 3, x_support=np.eye(3))
    with pytest.raises(ValueError):
        theorem2_gap_check(j, IDENTITY, 5, np.random.default_rng(0), loss=CROSS_ENTROPY)


# ---------------------------------------------------------------- loss hypotheses


def test_l2_satisfies_both_conditions():
    assert loss_hypothesis_probe(L2, np.random.default_rng(0), 1000).passed


def test_ce_gibbs_direction_holds():
    res = loss_hypothesis_probe(CROSS_ENTROPY, np.random.default_rng(0), 1000, inequalities=(INEQ_BB,))
    assert res.passed and res.n_checked == 1000


def test_ce_first_condition_fails_on_simplex():
    # CE(a, b) >= CE(a, a) is not a property of cross-entropy: b concentrated
    # where a is small makes CE(a, b) large, but b concentrated where a is
    # large makes it smaller than the entropy of a.
    res = loss_hypothesis_probe(CROSS_ENTROPY, np.random.default_rng(0), 1000, inequalities=(INEQ_AA,))
    assert not res.passed
    lab, laa = res.values
    assert lab < laa
    assert loss_eval(CROSS_ENTROPY, res.a, res.b) == pytest.approx(lab)
    a = np.array([0.5, 0.3, 0.2])
    assert loss_eval(CROSS_ENTROPY, a, [1.0, 0.0, 0.0]) < loss_eval(CROSS_ENTROPY, a, a)


def test_broken_loss_fails():
    broken = lambda a, b: -float(np.linalg.norm(np.asarray(a) - np.asarray(b)))  # noqa: E731
    res = loss_hypothesis_probe(broken, np.random.default_rng(0), 10)
    assert not res.passed and res.inequality == INEQ_AA


def test_lossfn_validation():
    with pytest.raises(ValueError):
        LossFn("l1")
