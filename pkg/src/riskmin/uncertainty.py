"""Two-stage pixel-wise mean and variance estimation on a Gaussian-linear inverse problem.

Stage one regresses x on y (fits E[x|y]); stage two regresses the squared
residual (x - f_mean(y))**2 on [lift(y), f_mean(y)] (fits the posterior pixel
variance). The Gaussian-linear posterior gives exact references for both.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import rng as rngmod
from .distributions import GaussianLinearModel, _psd_sqrt, downsample_operator, pixel_variance, smooth_prior_cov
from .models import Dataset, MlpModel, TrainConfig, predict, train_supervised


@dataclass
class InverseTask:
    glm: GaussianLinearModel
    x_train: np.ndarray
    y_train: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray

    @property
    def factor(self) -> int:
        return self.glm.d // self.glm.m


def build_task(seed: int, d: int = 8, factor: int = 4, n_train: int = 20000, n_test: int = 2000,
               noise_var: float = 0.0, length: float = 2.0, identity: bool = False) -> InverseTask:
    """Smooth Gaussian prior on R^d observed through block averaging (or the identity)."""
    A = np.eye(d) if identity else downsample_operator(d, factor)
    glm = GaussianLinearModel(np.zeros(d), smooth_prior_cov(d, length), A, noise_var)
    x_tr = glm.sample_prior(rngmod.stream(seed, "inverse/train-x"), n_train)
    x_te = glm.sample_prior(rngmod.stream(seed, "inverse/test-x"), n_test)
    y_tr = glm.observe(x_tr, rngmod.stream(seed, "inverse/train-noise"))
    y_te = glm.observe(x_te, rngmod.stream(seed, "inverse/test-noise"))
    return InverseTask(glm, x_tr, y_tr, x_te, y_te)


def lift(y: np.ndarray, factor: int) -> np.ndarray:
    """Zero-order-hold upsampling: each measurement repeated ``factor`` times."""
    return np.repeat(np.asarray(y, dtype=np.float64), factor, axis=1)


def var_label(x, mean_out) -> np.ndarray:
    x, mean_out = np.asarray(x, dtype=np.float64), np.asarray(mean_out, dtype=np.float64)
    if x.shape != mean_out.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {mean_out.shape}")
    return (x - mean_out) ** 2


@dataclass
class StageConfig:
    hidden: tuple[int, ...] = (64, 64)
    train: TrainConfig = field(
        default_factory=lambda: TrainConfig(optimizer="adamw", lr=1e-3, batch_size=128, iterations=6000, checkpoint_every=500)
    )


def _mlp(in_dim: int, out_dim: int, cfg: StageConfig, seed: int) -> MlpModel:
    return MlpModel([in_dim, *cfg.hidden, out_dim], seed=seed, init="he")


def train_mean(task: InverseTask, cfg: StageConfig, seed: int = 0) -> tuple[MlpModel, object]:
    model = _mlp(task.glm.m, task.glm.d, cfg, seed)
    tc = TrainConfig(**{**cfg.train.__dict__, "seed": seed})
    _, record = train_supervised(model, Dataset(task.y_train, task.x_train), tc)
    return model, record


class VarianceModel:
    """f_var on the concatenation [lift(y), f_mean(y)], clamped at zero."""

    def __init__(self, net: MlpModel, f_mean, factor: int, clamp: bool = True):
        self.net = net
        self.f_mean = f_mean
        self.factor = factor
        self.clamp = clamp

    def features(self, y) -> np.ndarray:
        return np.concatenate([lift(y, self.factor), self.f_mean(y)], axis=1)

    def __call__(self, y) -> np.ndarray:
        out = predict(self.net, self.features(y))
        return np.maximum(out, 0.0) if self.clamp else out


def train_var(task: InverseTask, f_mean, cfg: StageConfig, seed: int = 0, plug_in=None) -> tuple[VarianceModel, object]:
    """Fit the squared residual around a frozen mean estimate.

    ``f_mean`` is any callable y -> mean; ``plug_in`` optionally replaces it in
    the label only (e.g. the exact posterior mean) while the input stays f_mean.
    """
    net = _mlp(2 * task.glm.d, task.glm.d, cfg, seed)
    model = VarianceModel(net, f_mean, task.factor)
    centre = (plug_in or f_mean)(task.y_train)
    labels = var_label(task.x_train, centre)
    tc = TrainConfig(**{**cfg.train.__dict__, "seed": seed})
    _, record = train_supervised(net, Dataset(model.features(task.y_train), labels), tc)
    return model, record


# ---------------------------------------------------------------- metrics


@dataclass(frozen=True)
class MetricRow:
    comparison: str
    psnr: float
    mse: float
    nmse: float

    def to_dict(self) -> dict:
        return {"comparison": self.comparison, "psnr": self.psnr, "mse": self.mse, "nmse": self.nmse}


def metrics(pred, ref, peak: float | None = None, name: str = "") -> MetricRow:
    """MSE, NMSE = sum sq err / sum ref^2, PSNR against peak = max |ref| by default."""
    pred, ref = np.asarray(pred, dtype=np.float64), np.asarray(ref, dtype=np.float64)
    if pred.shape != ref.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {ref.shape}")
    ref_energy = float(np.sum(ref**2))
    if ref_energy == 0:
        raise ZeroDivisionError("reference has zero norm; NMSE undefined")
    err = float(np.sum((pred - ref) ** 2))
    mse = err / ref.size
    peak = float(np.max(np.abs(ref))) if peak is None else peak
    psnr = math.inf if mse == 0 else 10 * math.log10(peak**2 / mse)
    return MetricRow(name, psnr, mse, err / ref_energy)


def checkpoint_curve(record, build, evaluate) -> list[float]:
    """Evaluate ``evaluate(model)`` for each saved snapshot; ``build()`` makes a fresh model."""
    out = []
    for snap in record.snapshots:
        m = build()
        m.load_state(snap)
        out.append(evaluate(m))
    return out


def mc_pixel_variance(glm: GaussianLinearModel, y: np.ndarray, n_samples: int, seed: int) -> np.ndarray:
    """Per-item 1/n variance of ``n_samples`` exact posterior draws (the sampler twin)."""
    if n_samples < 2:
        raise ValueError("n_samples must be >= 2")
    mean = glm.posterior_mean(y)
    L = _psd_sqrt(glm.posterior_cov())
    gen = rngmod.stream(seed, "uncertainty/mc")
    draws = mean[:, None, :] + gen.standard_normal((len(y), n_samples, glm.d)) @ L.T
    return draws.var(axis=1)


@dataclass
class UncertaintyConfig:
    seed: int = 0
    d: int = 8
    factor: int = 4
    n_train: int = 20000
    n_test: int = 2000
    noise_var: float = 0.0
    mc_samples: int = 100
    mean_stage: StageConfig = field(default_factory=StageConfig)
    var_stage: StageConfig = field(default_factory=StageConfig)


def run_uncertainty_experiment(cfg: UncertaintyConfig) -> dict:
    t0 = time.time()
    task = build_task(cfg.seed, cfg.d, cfg.factor, cfg.n_train, cfg.n_test, cfg.noise_var)
    glm = task.glm
    f_mean_net, rec_mean = train_mean(task, cfg.mean_stage, cfg.seed)
    f_mean = lambda y: predict(f_mean_net, y)  # noqa: E731
    f_var, rec_var = train_var(task, f_mean, cfg.var_stage, cfg.seed + 1)

    y, x = task.y_test, task.x_test
    oracle_mean = glm.posterior_mean(y)
    oracle_std = np.broadcast_to(np.sqrt(pixel_variance(glm)), x.shape)
    mc_std = np.sqrt(mc_pixel_variance(glm, y, cfg.mc_samples, cfg.seed))
    mean_pred = f_mean(y)
    std_pred = np.sqrt(f_var(y))
    single_std = np.sqrt(var_label(x, mean_pred))

    rows = [
        metrics(oracle_mean, x, name="oracle_mean vs x"),
        metrics(mean_pred, x, name="f_mean vs x"),
        metrics(mean_pred, oracle_mean, name="f_mean vs oracle_mean"),
        metrics(std_pred, oracle_std, name="f_var vs oracle_var"),
        metrics(std_pred, mc_std, name="f_var vs mc_var"),
        metrics(mc_std, oracle_std, name="mc_var vs oracle_var"),
        metrics(std_pred, single_std, name="f_var vs single_residual"),
    ]

    def var_nmse(net) -> float:
        return metrics(np.sqrt(VarianceModel(net, f_mean, task.factor)(y)), oracle_std).nmse

    curve = checkpoint_curve(rec_var, lambda: _mlp(2 * glm.d, glm.d, cfg.var_stage, cfg.seed + 1), var_nmse)
    return {
        "rows": [r.to_dict() for r in rows],
        "min_var_output": float(f_var(y).min()),
        "var_nmse_curve": curve,
        "train_mean": rec_mean.to_dict(),
        "train_var": rec_var.to_dict(),
        "elapsed_s": time.time() - t0,
    }


def row(result: dict, comparison: str) -> dict:
    for r in result["rows"]:
        if r["comparison"] == comparison:
            return r
    raise KeyError(comparison)
