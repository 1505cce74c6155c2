"""Label-noise models, the noisy-label distribution q_y, and the classification study.

A model trained with cross-entropy on labels drawn from q_y converges to q_y
itself, so its argmax decision is right exactly where the true class is the
largest entry of q_y. ``theory_accuracy`` computes that prediction.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import rng as rngmod
from .harness.datasets import LabeledData, synth_blobs
from .models import Dataset, MlpModel, Model, TableModel, TrainConfig, predict, predict_class, train_supervised

KINDS = ("uniform", "biased", "generated")


def _check_alpha(alpha: float, n: int, c: int) -> None:
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if n < 2:
        raise ValueError("need n >= 2 classes")
    if not 0 <= c < n:
        raise ValueError(f"class {c} outside 0..{n - 1}")


def qy_uniform(alpha: float, n: int, c: int) -> np.ndarray:
    _check_alpha(alpha, n, c)
    q = np.full(n, (1.0 - alpha) / (n - 1))
    q[c] = alpha
    return q


def qy_biased(alpha: float, n: int, c: int) -> np.ndarray:
    _check_alpha(alpha, n, c)
    q = np.zeros(n)
    q[c] = alpha
    q[(c + 1) % n] = 1.0 - alpha
    return q


def qy_generated(beta: float, m_out, c: int) -> np.ndarray:
    """Correct class keeps beta * M_c; the rest is spread in proportion to M."""
    return qy_generated_batch(beta, np.asarray(m_out, dtype=np.float64)[None], np.array([c]))[0]


def qy_generated_batch(beta: float, m_out: np.ndarray, classes: np.ndarray) -> np.ndarray:
    if not 0 < beta <= 1:
        raise ValueError(f"beta must lie in (0, 1], got {beta}")
    m = np.asarray(m_out, dtype=np.float64)
    rows = np.arange(len(classes))
    mc = m[rows, classes]
    if np.any(mc >= 1.0):
        bad = int(np.argmax(mc >= 1.0))
        raise ValueError(f"reference probability of the true class is 1 for item {bad}; generated noise undefined")
    q = m * ((1.0 - beta * mc) / (1.0 - mc))[:, None]
    q[rows, classes] = beta * mc
    return q


def qy_table(kind: str, level: float, classes: np.ndarray, n_classes: int, m_out: np.ndarray | None = None) -> np.ndarray:
    """q_y for every item: ``level`` is alpha (uniform/biased) or beta (generated)."""
    classes = np.asarray(classes, dtype=np.int64)
    if kind == "uniform":
        _check_alpha(level, n_classes, 0)
        q = np.full((len(classes), n_classes), (1.0 - level) / (n_classes - 1))
        q[np.arange(len(classes)), classes] = level
        return q
    if kind == "biased":
        _check_alpha(level, n_classes, 0)
        q = np.zeros((len(classes), n_classes))
        q[np.arange(len(classes)), classes] = level
        q[np.arange(len(classes)), (classes + 1) % n_classes] = 1.0 - level
        return q
    if kind == "generated":
        if m_out is None:
            raise ValueError("generated noise needs reference classifier outputs")
        return qy_generated_batch(level, m_out, classes)
    raise ValueError(f"unknown noise kind {kind!r}")


@dataclass(frozen=True)
class NoiseSpec:
    kind: str
    level: float  # alpha for uniform/biased, beta for generated
    n_classes: int = 10
    reference: Model | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.kind == "generated":
            if self.reference is None:
                raise ValueError("generated noise needs a reference classifier")
            if self.reference.head != "softmax":
                raise ValueError("reference classifier must have a softmax head")
        elif not 0 < self.level < 1:
            raise ValueError("alpha must lie in (0, 1)")

    def q(self, inputs, classes) -> np.ndarray:
        m_out = predict(self.reference, inputs) if self.kind == "generated" else None
        return qy_table(self.kind, self.level, classes, self.n_classes, m_out)


@dataclass
class NoisyDataset:
    inputs: np.ndarray
    true_class: np.ndarray
    noisy_class: np.ndarray
    q: np.ndarray

    @property
    def eta(self) -> float:
        """Empirical fraction of labels equal to the true class."""
        return float(np.mean(self.noisy_class == self.true_class))

    @property
    def expected_eta(self) -> float:
        return float(np.mean(self.q[np.arange(len(self.q)), self.true_class]))

    def one_hot(self) -> np.ndarray:
        out = np.zeros_like(self.q)
        out[np.arange(len(out)), self.noisy_class] = 1.0
        return out

    def training_set(self) -> Dataset:
        return Dataset(self.inputs, self.one_hot())


def sample_from_rows(q: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF draw of one category per row of ``q`` from uniforms ``u``."""
    cdf = np.cumsum(q, axis=1)
    cdf[:, -1] = np.inf
    return np.argmax(u[:, None] < cdf, axis=1)


def build_noisy_dataset(data: LabeledData, spec: NoiseSpec, seed: int, tag: str = "noise") -> NoisyDataset:
    """Draw one noisy label per item from its q_y (per-item counter-based uniforms)."""
    q = spec.q(data.inputs, data.labels)
    u = rngmod.item_uniforms(seed, f"{tag}/{spec.kind}/{spec.level!r}", np.arange(len(q)))
    return NoisyDataset(data.inputs, np.asarray(data.labels), sample_from_rows(q, u), q)


def calibrate_alpha_from_generated(data: LabeledData, beta: float, reference: Model) -> float:
    """Expected correct-label rate of generated noise: mean over items of beta * M(y)_c."""
    q = qy_table("generated", beta, data.labels, data.n_classes, predict(reference, data.inputs))
    return float(np.mean(q[np.arange(len(q)), data.labels]))


def _ce_rows(pred: np.ndarray, q: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        t = q * np.log(pred)
    return -np.where(q == 0, 0.0, t).sum(axis=1)


def ce_bar_f(pred: np.ndarray, q: np.ndarray) -> float:
    """Mean CE(f(y), q_y) = -sum_i q_i log f_i over the dataset."""
    return float(np.mean(_ce_rows(np.asarray(pred), np.asarray(q))))


def ce_bar_q(q: np.ndarray) -> float:
    """Mean entropy of q_y: the smallest value ce_bar_f can take."""
    return float(np.mean(_ce_rows(np.asarray(q), np.asarray(q))))


def argmax_accuracy(q: np.ndarray, true_class: np.ndarray) -> float:
    """Fraction of rows whose argmax (lowest index on ties) is the true class."""
    return float(np.mean(np.argmax(q, axis=1) == np.asarray(true_class)))


def theory_accuracy(spec: NoiseSpec, data: LabeledData) -> float:
    """Accuracy of a model that outputs q_y exactly and predicts its argmax."""
    return argmax_accuracy(spec.q(data.inputs, data.labels), data.labels)


def total_variation(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    return 0.5 * np.abs(np.asarray(p) - np.asarray(q)).sum(axis=-1)


# ---------------------------------------------------------------- experiments


@dataclass
class NoisyLabelConfig:
    seed: int = 0
    n_classes: int = 10
    n_per_class: int = 1000
    test_per_class: int = 200
    spread: float = 0.05
    hidden: tuple[int, ...] = (64, 64)
    betas: tuple[float, ...] = (0.9, 0.7, 0.5, 0.4, 0.3)
    extra_biased_alphas: tuple[float, ...] = (0.6, 0.4)
    kinds: tuple[str, ...] = KINDS
    train: TrainConfig = field(
        default_factory=lambda: TrainConfig(loss="cross_entropy", optimizer="adam", lr=3e-3, batch_size=128, iterations=6000, checkpoint_every=1000)
    )
    mnist: dict | None = None  # {"train_images", "train_labels", "test_images", "test_labels"} paths


def _classifier(cfg: NoisyLabelConfig, seed: int, in_dim: int) -> Model:
    if cfg.mnist:
        from .models import ConvNet

        return ConvNet(n_classes=cfg.n_classes, seed=seed)
    return MlpModel([in_dim, *cfg.hidden, cfg.n_classes], head="softmax", seed=seed)


def _load_data(cfg: NoisyLabelConfig) -> tuple[LabeledData, LabeledData]:
    if cfg.mnist:
        from .harness.idx import load_idx

        tr = LabeledData(load_idx(cfg.mnist["train_images"]), load_idx(cfg.mnist["train_labels"]).astype(np.int64), 10)
        te = LabeledData(load_idx(cfg.mnist["test_images"]), load_idx(cfg.mnist["test_labels"]).astype(np.int64), 10)
        return tr, te
    tr = synth_blobs(cfg.n_classes, cfg.n_per_class, cfg.spread, cfg.seed, tag="blobs/train")
    te = synth_blobs(cfg.n_classes, cfg.test_per_class, cfg.spread, cfg.seed, tag="blobs/test")
    return tr, te


def _train(cfg: NoisyLabelConfig, train_set: Dataset, seed_tag: str, in_dim: int) -> Model:
    seed = rngmod.derive_key(cfg.seed, seed_tag) & 0xFFFFFFFF
    model = _classifier(cfg, seed, in_dim)
    tc = TrainConfig(**{**cfg.train.__dict__, "seed": seed})
    train_supervised(model, train_set, tc)
    return model


def run_noisy_label_experiment(cfg: NoisyLabelConfig, log=None) -> dict:
    """Reference classifier, then one trained classifier per (noise kind, level).

    Levels follow the correct-label-rate matching protocol: for every beta the
    generated noise's expected correct-label rate becomes alpha for uniform and
    biased noise. Extra biased runs at ``extra_biased_alphas`` probe the cliff.
    """
    t0 = time.time()
    train, test = _load_data(cfg)
    in_dim = int(np.prod(train.inputs.shape[1:]))
    clean = Dataset(train.inputs, np.eye(cfg.n_classes)[train.labels])
    reference = _train(cfg, clean, "reference", in_dim)
    ref_acc = float(np.mean(predict_class(reference, test.inputs) == test.labels))

    runs: list[tuple[str, float, float, int]] = []  # kind, level, alpha-or-beta, group
    for level_idx, beta in enumerate(cfg.betas):
        alpha = calibrate_alpha_from_generated(train, beta, reference)
        for kind in cfg.kinds:
            runs.append((kind, alpha if kind != "generated" else beta, alpha, level_idx))
    for alpha in cfg.extra_biased_alphas:
        runs.append(("biased", alpha, alpha, -1))

    rows = []
    for kind, level, alpha, group in runs:
        spec = NoiseSpec(kind, level, cfg.n_classes, reference if kind == "generated" else None)
        noisy = build_noisy_dataset(train, spec, cfg.seed)
        model = _train(cfg, noisy.training_set(), f"model/{kind}/{level!r}", in_dim)
        pred = predict(model, train.inputs)
        q_test = spec.q(test.inputs, test.labels)
        rows.append({
            "noise_type": kind,
            "level": group,
            "alpha_or_beta": float(level),
            "matched_alpha": float(alpha),
            "eta": noisy.eta,
            "expected_eta": noisy.expected_eta,
            "ce_bar_f": ce_bar_f(pred, noisy.q),
            "ce_bar_q": ce_bar_q(noisy.q),
            "max_tv": float(total_variation(pred, noisy.q).max()),
            "test_acc": float(np.mean(predict_class(model, test.inputs) == test.labels)),
            "theory_acc": argmax_accuracy(q_test, test.labels),
        })
        if log:
            log(f"{kind:9s} level={level:.4f} eta={noisy.eta:.4f} acc={rows[-1]['test_acc']:.4f} theory={rows[-1]['theory_acc']:.4f}")
    return {
        "reference_test_acc": ref_acc,
        "rows": rows,
        "dataset_digest": train.digest(),
        "elapsed_s": time.time() - t0,
    }


def generated_between_count(rows: list[dict]) -> tuple[int, int]:
    """Levels where biased <= generated <= uniform test accuracy (matched eta)."""
    by_level: dict[int, dict[str, float]] = {}
    for r in rows:
        if r["level"] >= 0:
            by_level.setdefault(r["level"], {})[r["noise_type"]] = r["test_acc"]
    ok = sum(
        1 for v in by_level.values()
        if {"uniform", "biased", "generated"} <= v.keys() and v["biased"] <= v["generated"] <= v["uniform"]
    )
    return ok, len(by_level)


@dataclass
class TableNoiseConfig:
    seed: int = 0
    n_classes: int = 10
    n_draws: int = 60000
    beta: float = 0.6
    spread: float = 0.05
    reference_iterations: int = 1500
    iterations: int = 600
    lr: float = 0.1


def run_table_noise_check(cfg: TableNoiseConfig) -> dict:
    """Table model per distinct input trained on sampled noisy labels, compared with q_y.

    The inputs are one blob point per class; draws pick an input uniformly and
    then a label from that input's q_y. Returns per-kind max TV and CE gap.
    """
    pts = synth_blobs(cfg.n_classes, 1, cfg.spread, cfg.seed, tag="table/points")
    ref_data = synth_blobs(cfg.n_classes, 200, cfg.spread, cfg.seed, tag="table/reference")
    reference = MlpModel([2, 32, cfg.n_classes], head="softmax", seed=cfg.seed)
    train_supervised(
        reference,
        Dataset(ref_data.inputs, np.eye(cfg.n_classes)[ref_data.labels]),
        TrainConfig(loss="cross_entropy", lr=1e-2, batch_size=128, iterations=cfg.reference_iterations, checkpoint_every=cfg.reference_iterations, seed=cfg.seed, select="last"),
    )
    alpha = calibrate_alpha_from_generated(pts, cfg.beta, reference)
    which = rngmod.stream(cfg.seed, "table/inputs").integers(0, cfg.n_classes, size=cfg.n_draws)
    draws = LabeledData(pts.inputs[which], pts.labels[which], cfg.n_classes)
    out: dict = {"alpha": alpha, "beta": cfg.beta, "kinds": {}}
    for kind in KINDS:
        level = cfg.beta if kind == "generated" else alpha
        spec = NoiseSpec(kind, level, cfg.n_classes, reference if kind == "generated" else None)
        noisy = build_noisy_dataset(draws, spec, cfg.seed, tag="table/noise")
        model = TableModel(cfg.n_classes, cfg.n_classes, head="softmax")
        # mean CE over draws is linear in the target, so per-input label
        # frequencies weighted by input counts give the identical objective
        counts = np.zeros((cfg.n_classes, cfg.n_classes))
        np.add.at(counts, (which, noisy.noisy_class), 1.0)
        n_in = counts.sum(axis=1)
        train_supervised(
            model,
            Dataset(np.arange(cfg.n_classes), counts / n_in[:, None], n_in),
            TrainConfig(loss="cross_entropy", optimizer="adam", lr=cfg.lr, batch_size=0, iterations=cfg.iterations, checkpoint_every=cfg.iterations, seed=cfg.seed),
        )
        f_y = predict(model, np.arange(cfg.n_classes))
        q_y = spec.q(pts.inputs, pts.labels)
        pred_items = f_y[which]
        out["kinds"][kind] = {
            "max_tv": float(total_variation(f_y, q_y).max()),
            "ce_bar_f": ce_bar_f(pred_items, noisy.q),
            "ce_bar_q": ce_bar_q(noisy.q),
            "eta": noisy.eta,
        }
    return out
