import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from riskmin.harness.datasets import LabeledData
from riskmin.models import TableModel
from riskmin.noisy_labels import (
    NoiseSpec,
    TableNoiseConfig,
    argmax_accuracy,
    build_noisy_dataset,
    calibrate_alpha_from_generated,
    ce_bar_f,
    ce_bar_q,
    generated_between_count,
    qy_biased,
    qy_generated,
    qy_table,
    qy_uniform,
    run_table_noise_check,
    sample_from_rows,
    theory_accuracy,
    total_variation,
)

seeds = st.integers(0, 2**32 - 1)


def _reference(m_rows):
    """Softmax table model whose output on input i is the given row."""
    ref = TableModel(len(m_rows), len(m_rows[0]), head="softmax")
    ref.table.data[:] = np.log(np.asarray(m_rows, dtype=np.float64))
    return ref


def _index_data(labels, n_classes):
    return LabeledData(np.arange(len(labels)), np.asarray(labels), n_classes)


# ---------------------------------------------------------------- q_y formulas


def test_uniform_example():
    q = qy_uniform(0.8913, 10, 3)
    assert q[3] == 0.8913
    assert np.allclose(np.delete(q, 3), 0.0120778, atol=1e-7)
    assert q.sum() == pytest.approx(1.0, abs=1e-15)
    assert np.allclose(np.delete(qy_uniform(0.999, 10, 0), 0), 0.001 / 9)


def test_biased_wraparound_and_tie():
    q = qy_biased(0.4, 10, 9)
    assert q[9] == 0.4 and q[0] == 0.6 and q.sum() == pytest.approx(1.0)
    assert np.argmax(qy_biased(0.4, 10, 2)) == 3
    assert np.argmax(qy_biased(0.6, 10, 2)) == 2
    assert np.argmax(qy_biased(0.5, 10, 2)) == 2  # tie: lower index wins


def test_generated_example():
    assert np.allclose(qy_generated(0.5, [0.6, 0.3, 0.1], 0), [0.30, 0.525, 0.175], atol=1e-15)
    m = np.array([0.2, 0.5, 0.3])
    assert np.allclose(qy_generated(1.0, m, 1), m)


def test_generated_undefined_at_certain_reference():
    with pytest.raises(ValueError, match="item 0"):
        qy_generated(0.5, [1.0, 0.0], 0)


def test_range_errors():
    for bad in (0.0, 1.0, -0.1):
        with pytest.raises(ValueError):
            qy_uniform(bad, 10, 0)
    with pytest.raises(ValueError):
        qy_biased(0.5, 1, 0)
    with pytest.raises(ValueError):
        qy_uniform(0.5, 10, 10)
    with pytest.raises(ValueError):
        qy_generated(0.0, [0.5, 0.5], 0)
    with pytest.raises(ValueError):
        NoiseSpec("flip", 0.5)
    with pytest.raises(ValueError):
        NoiseSpec("generated", 0.5)


@settings(max_examples=100, deadline=None)
@given(seeds)
def test_generated_matches_renormalisation(seed):
    gen = np.random.default_rng(seed)
    n = int(gen.integers(2, 8))
    m = gen.dirichlet(np.ones(n))
    c = int(gen.integers(n))
    beta = float(gen.uniform(0.05, 1.0))
    q = qy_generated(beta, m, c)
    # independent construction: keep beta*M_c, spread the rest over the
    # other classes in proportion to their reference probabilities
    others = [i for i in range(n) if i != c]
    rest = sum(m[i] for i in others)
    ref = [beta * m[c] if i == c else (1 - beta * m[c]) * m[i] / rest for i in range(n)]
    assert np.allclose(q, ref, atol=1e-12)
    assert np.all(q >= 0) and abs(q.sum() - 1) < 1e-12


def test_table_matches_single_item_formulas():
    classes = np.array([0, 4, 9])
    assert np.array_equal(qy_table("uniform", 0.7, classes, 10), np.stack([qy_uniform(0.7, 10, c) for c in classes]))
    assert np.array_equal(qy_table("biased", 0.7, classes, 10), np.stack([qy_biased(0.7, 10, c) for c in classes]))
    with pytest.raises(ValueError):
        qy_table("generated", 0.7, classes, 10)


# ---------------------------------------------------------------- sampling


def test_sample_from_rows_inverse_cdf():
    q = np.array([[0.2, 0.3, 0.5]] * 4)
    assert sample_from_rows(q, np.array([0.0, 0.19, 0.21, 0.999999])).tolist() == [0, 0, 1, 2]
    # rounding in the cumulative sum never yields an out-of-range class
    assert sample_from_rows(np.array([[0.1] * 10]), np.array([1 - 1e-17])).tolist() == [9]


def test_eta_matches_alpha_on_large_sample():
    data = _index_data(np.tile(np.arange(10), 6000), 10)
    noisy = build_noisy_dataset(data, NoiseSpec("uniform", 0.7121), seed=3)
    assert abs(noisy.eta - 0.7121) < 0.01
    assert noisy.expected_eta == pytest.approx(0.7121)
    assert set(np.unique(noisy.noisy_class)) <= set(range(10))


def test_eta_near_one():
    data = _index_data(np.arange(1000) % 10, 10)
    assert build_noisy_dataset(data, NoiseSpec("uniform", 0.999999), seed=0).eta > 0.99


def test_noisy_draws_deterministic_and_seeded():
    data = _index_data(np.arange(500) % 10, 10)
    a = build_noisy_dataset(data, NoiseSpec("biased", 0.6), seed=7)
    b = build_noisy_dataset(data, NoiseSpec("biased", 0.6), seed=7)
    c = build_noisy_dataset(data, NoiseSpec("biased", 0.6), seed=8)
    assert np.array_equal(a.noisy_class, b.noisy_class)
    assert not np.array_equal(a.noisy_class, c.noisy_class)
    # biased noise only ever produces the true class or its successor
    assert np.all((a.noisy_class == a.true_class) | (a.noisy_class == (a.true_class + 1) % 10))


def test_item_draw_independent_of_dataset_length():
    short = build_noisy_dataset(_index_data(np.arange(100) % 10, 10), NoiseSpec("uniform", 0.5), seed=1)
    long = build_noisy_dataset(_index_data(np.arange(1000) % 10, 10), NoiseSpec("uniform", 0.5), seed=1)
    assert np.array_equal(short.noisy_class, long.noisy_class[:100])


def test_one_hot_training_set():
    noisy = build_noisy_dataset(_index_data([0, 1, 2], 3), NoiseSpec("uniform", 0.5, 3), seed=0)
    ds = noisy.training_set()
    assert np.array_equal(ds.targets.argmax(axis=1), noisy.noisy_class)
    assert np.all(ds.targets.sum(axis=1) == 1)


# ---------------------------------------------------------------- calibration


def test_calibration_is_expectation():
    m = [[0.6, 0.3, 0.1], [0.2, 0.7, 0.1]]
    data = _index_data([0, 1], 3)
    alpha = calibrate_alpha_from_generated(data, 0.5, _reference(m))
    assert alpha == pytest.approx(0.5 * (0.6 + 0.7) / 2, abs=1e-12)
    assert alpha == calibrate_alpha_from_generated(data, 0.5, _reference(m))


def test_calibration_error_on_certain_reference():
    ref = TableModel(1, 3, head="softmax")
    ref.table.data[:] = [[100.0, 0.0, 0.0]]
    with pytest.raises(ValueError):
        calibrate_alpha_from_generated(_index_data([0], 3), 0.6, ref)


# ---------------------------------------------------------------- metrics


def test_ce_bar_of_oracle_equals_entropy():
    q = qy_table("uniform", 0.7, np.arange(10), 10)
    assert ce_bar_f(q, q) == ce_bar_q(q)
    closed = -0.7 * math.log(0.7) - 0.3 * math.log(0.3 / 9)
    assert ce_bar_q(q) == pytest.approx(closed, abs=1e-12)


def test_ce_bar_q_handles_zero_entries():
    q = qy_table("biased", 0.6, np.arange(5), 5)
    assert ce_bar_q(q) == pytest.approx(-0.6 * math.log(0.6) - 0.4 * math.log(0.4))
    assert ce_bar_f(np.full((5, 5), 0.2), q) == pytest.approx(math.log(5))


def test_theory_accuracy_examples():
    data = _index_data(np.arange(10), 10)
    assert theory_accuracy(NoiseSpec("uniform", 0.11), data) == 1.0
    assert theory_accuracy(NoiseSpec("biased", 0.4), data) == 0.0
    assert theory_accuracy(NoiseSpec("biased", 0.6), data) == 1.0


def test_theory_accuracy_generated_by_enumeration():
    gen = np.random.default_rng(4)
    m = gen.dirichlet(np.ones(4) * 0.7, size=50)
    labels = gen.integers(0, 4, 50)
    data = _index_data(labels, 4)
    hits = 0
    for i in range(50):
        q = qy_generated(0.6, m[i], labels[i])
        best = max(range(4), key=lambda k: (q[k], -k))
        hits += best == labels[i]
    got = theory_accuracy(NoiseSpec("generated", 0.6, 4, _reference(m)), data)
    assert got == pytest.approx(hits / 50)


def test_argmax_accuracy_tie_rule():
    assert argmax_accuracy(np.array([[0.5, 0.5], [0.5, 0.5]]), np.array([0, 1])) == 0.5


def test_total_variation():
    assert total_variation([1.0, 0.0], [0.0, 1.0]) == 1.0
    assert np.allclose(total_variation(np.eye(3), np.eye(3)), 0.0)


def test_generated_between_count_inclusive():
    rows = [
        {"noise_type": "uniform", "level": 0, "test_acc": 0.9},
        {"noise_type": "biased", "level": 0, "test_acc": 0.5},
        {"noise_type": "generated", "level": 0, "test_acc": 0.9},
        {"noise_type": "uniform", "level": 1, "test_acc": 0.9},
        {"noise_type": "biased", "level": 1, "test_acc": 0.5},
        {"noise_type": "generated", "level": 1, "test_acc": 0.4},
        {"noise_type": "biased", "level": -1, "test_acc": 0.0},
    ]
    assert generated_between_count(rows) == (1, 2)


def test_generated_reference_needs_softmax_head():
    with pytest.raises(ValueError):
        NoiseSpec("generated", 0.5, 4, TableModel(1, 4))
    assert NoiseSpec("generated", 0.5, 4, TableModel(1, 4, head="softmax")).kind == "generated"


def test_table_model_reaches_q_under_sampling():
    res = run_table_noise_check(TableNoiseConfig(n_draws=60000))
    for kind, r in res["kinds"].items():
        assert r["max_tv"] <= 0.03, kind
        assert r["ce_bar_f"] - r["ce_bar_q"] < 0.02, kind
