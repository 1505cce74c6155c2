"""Posterior means and scores under Gaussian corruption: Tweedie, score regression, Noise2Noise.

Everything here is 1-D or 2-D with a Gaussian-mixture prior, so each learned
function has a closed-form oracle: the noisy marginal of a mixture is the same
mixture with every component variance widened by the noise variance.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid
from scipy.stats import norm

from .distributions import GaussianMixture, make_noise2noise_pairs
from .models import Dataset, MlpModel, TrainConfig, predict, train_supervised


class QuadratureError(RuntimeError):
    pass


def tweedie_mean(y, noise_var: float, score) -> np.ndarray:
    """E[x | y] = y + noise_var * grad log p(y) for y = x + N(0, noise_var I)."""
    if noise_var <= 0:
        raise ValueError("noise variance must be positive")
    y = np.asarray(y, dtype=np.float64)
    return y + noise_var * np.asarray(score(y))


def score_label(x, y, noise_var: float) -> np.ndarray:
    """grad_y log p(y | x) for the Gaussian kernel: (x - y) / noise_var."""
    return (np.asarray(x) - np.asarray(y)) / noise_var


def nmse(pred, ref) -> float:
    pred, ref = np.asarray(pred, dtype=np.float64), np.asarray(ref, dtype=np.float64)
    denom = np.sum(ref**2)
    if denom == 0:
        raise ZeroDivisionError("reference has zero norm; NMSE undefined")
    return float(np.sum((pred - ref) ** 2) / denom)


# ---------------------------------------------------------------- 1-D mixture helpers


def _check_scalar(gmm: GaussianMixture) -> None:
    if gmm.dim != 1:
        raise ValueError("this routine needs a 1-D mixture")


def mixture_cdf(gmm: GaussianMixture, y) -> np.ndarray:
    _check_scalar(gmm)
    y = np.asarray(y, dtype=np.float64)
    sd = np.sqrt(gmm.variances)
    return (gmm.weights * norm.cdf((y[..., None] - gmm.means[:, 0]) / sd)).sum(axis=-1)


def mixture_quantile(gmm: GaussianMixture, p: float, tol: float = 1e-12) -> float:
    """Invert the mixture CDF by bisection."""
    _check_scalar(gmm)
    sd = np.sqrt(gmm.variances.max())
    lo, hi = gmm.means.min() - 40 * sd, gmm.means.max() + 40 * sd
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mixture_cdf(gmm, mid) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def mixture_std(gmm: GaussianMixture) -> np.ndarray:
    """Per-coordinate standard deviation of the whole mixture."""
    mean = gmm.weights @ gmm.means
    second = gmm.weights @ (gmm.means**2 + gmm.variances[:, None])
    return np.sqrt(second - mean**2)


def evaluation_grid(gmm: GaussianMixture, n: int = 512, width: float = 4.0) -> np.ndarray:
    """Equispaced 1-D grid over mean +- width * std of the mixture."""
    _check_scalar(gmm)
    mean = float(gmm.weights @ gmm.means[:, 0])
    sd = float(mixture_std(gmm)[0])
    return np.linspace(mean - width * sd, mean + width * sd, n)


# ---------------------------------------------------------------- score identity


def _posterior_expectation(gmm: GaussianMixture, y: float, noise_var: float, fn, n: int) -> float:
    """E_{x|y}[fn(x)] by trapezoid rule on a grid wide enough for every component."""
    sd = np.sqrt(gmm.variances)
    post_sd = np.sqrt(gmm.variances * noise_var / (gmm.variances + noise_var))
    post_mu = (gmm.variances * y + noise_var * gmm.means[:, 0]) / (gmm.variances + noise_var)
    lo = min((post_mu - 12 * post_sd).min(), (gmm.means[:, 0] - 12 * sd).min())
    hi = max((post_mu + 12 * post_sd).max(), (gmm.means[:, 0] + 12 * sd).max())
    x = np.linspace(lo, hi, n)
    log_w = gmm.log_density(x) - 0.5 * (y - x) ** 2 / noise_var
    w = np.exp(log_w - log_w.max())
    return float(trapezoid(w * fn(x), x) / trapezoid(w, x))


def posterior_score_expectation(gmm: GaussianMixture, y: float, noise_var: float, n: int = 4001, tol: float = 1e-10) -> float:
    """E_{x|y}[(x - y) / noise_var], refined until two grid sizes agree within ``tol``."""
    _check_scalar(gmm)
    fn = lambda x: (x - y) / noise_var  # noqa: E731
    prev = _posterior_expectation(gmm, y, noise_var, fn, n)
    for _ in range(5):
        n = 2 * n - 1
        cur = _posterior_expectation(gmm, y, noise_var, fn, n)
        if abs(cur - prev) <= tol * max(1.0, abs(cur)):
            return cur
        prev = cur
    raise QuadratureError(f"quadrature at y={y} did not settle (last change {abs(cur - prev):.3e})")


def verify_score_identity(gmm: GaussianMixture, noise_var: float, y_grid, marginal_var: float | None = None) -> float:
    """Max |E_{x|y}[grad_y log p(y|x)] - grad_y log p(y)| over ``y_grid``.

    The left side is integrated numerically against the exact posterior; the
    right side is the analytic score of the widened mixture. ``marginal_var``
    lets a caller widen the marginal by a different variance (negative control).
    """
    _check_scalar(gmm)
    if noise_var <= 0:
        raise ValueError("noise variance must be positive")
    y_grid = np.asarray(y_grid, dtype=np.float64).reshape(-1)
    lhs = np.array([posterior_score_expectation(gmm, float(y), noise_var) for y in y_grid])
    rhs = gmm.widen(noise_var if marginal_var is None else marginal_var).score(y_grid)
    return float(np.max(np.abs(lhs - rhs)))


# ---------------------------------------------------------------- learned estimators


def default_prior() -> GaussianMixture:
    return GaussianMixture([0.3, 0.45, 0.25], [[-2.0], [0.5], [3.0]], [0.25, 0.16, 0.36])


def _regressor(in_dim: int, out_dim: int, hidden, seed: int) -> MlpModel:
    return MlpModel([in_dim, *hidden, out_dim], activation="tanh", seed=seed, init="he")


@dataclass
class ScoreConfig:
    seed: int = 0
    noise_var: float = 0.25
    n_samples: int = 50000
    hidden: tuple[int, ...] = (64, 64)
    train: TrainConfig = field(default_factory=lambda: TrainConfig(lr=3e-3, batch_size=256, iterations=6000, checkpoint_every=1000))
    prior: GaussianMixture = field(default_factory=default_prior)


def score_regression_train(prior: GaussianMixture, noise_var: float, n_samples: int, cfg: ScoreConfig) -> tuple[MlpModel, dict]:
    """Regress (x - y) / noise_var on y; the minimiser is the noisy-marginal score."""
    pairs = make_noise2noise_pairs(prior.sample, np.sqrt(noise_var), 0.0, n_samples, cfg.seed, tag="score")
    model = _regressor(prior.dim, prior.dim, cfg.hidden, cfg.seed)
    tc = TrainConfig(**{**cfg.train.__dict__, "seed": cfg.seed})
    _, record = train_supervised(model, Dataset(pairs.y, score_label(pairs.s, pairs.y, noise_var)), tc)
    return model, record.to_dict()


def score_region(gmm_noisy: GaussianMixture, n: int = 512, lo: float = 0.05, hi: float = 0.95) -> np.ndarray:
    return np.linspace(mixture_quantile(gmm_noisy, lo), mixture_quantile(gmm_noisy, hi), n)


def run_score_experiment(cfg: ScoreConfig) -> dict:
    t0 = time.time()
    model, train_rec = score_regression_train(cfg.prior, cfg.noise_var, cfg.n_samples, cfg)
    noisy = cfg.prior.widen(cfg.noise_var)
    grid = score_region(noisy)
    pred = predict(model, grid[:, None])[:, 0]
    exact = noisy.score(grid)
    max_dev = verify_score_identity(cfg.prior, cfg.noise_var, evaluation_grid(noisy, 64))
    return {
        "nmse_region": nmse(pred, exact),
        "identity_max_dev": max_dev,
        "region": [float(grid[0]), float(grid[-1])],
        "train": train_rec,
        "grid": {"y": grid.tolist(), "model_score": pred.tolist(), "exact_score": exact.tolist()},
        "elapsed_s": time.time() - t0,
    }


@dataclass
class DenoiseTask:
    prior: GaussianMixture
    sigma1: float = 0.5
    sigma2: float = 0.5
    n_train: int = 50000

    def __post_init__(self) -> None:
        if self.sigma1 <= 0:
            raise ValueError("input noise sigma1 must be positive")
        if self.sigma2 < 0:
            raise ValueError("target noise sigma2 must be >= 0")


@dataclass
class Noise2NoiseConfig:
    seed: int = 0
    hidden: tuple[int, ...] = (64, 64)
    grid_points: int = 512
    train: TrainConfig = field(default_factory=lambda: TrainConfig(lr=3e-3, batch_size=256, iterations=6000, checkpoint_every=500))
    task: DenoiseTask = field(default_factory=lambda: DenoiseTask(default_prior()))


def noise2noise_equivalence_run(task: DenoiseTask, cfg: Noise2NoiseConfig) -> dict:
    """Train twins y->x (noisy targets) and y->s (clean targets) with identical seeds.

    Reports the twins' disagreement on a held-out grid and each one's error
    against the exact posterior mean E[s | y].
    """
    t0 = time.time()
    pairs = make_noise2noise_pairs(task.prior.sample, task.sigma1, task.sigma2, task.n_train, cfg.seed)
    tc = TrainConfig(**{**cfg.train.__dict__, "seed": cfg.seed})
    f_x = _regressor(task.prior.dim, task.prior.dim, cfg.hidden, cfg.seed)
    f_s = _regressor(task.prior.dim, task.prior.dim, cfg.hidden, cfg.seed)
    _, rec_x = train_supervised(f_x, Dataset(pairs.y, pairs.x), tc)
    _, rec_s = train_supervised(f_s, Dataset(pairs.y, pairs.s), tc)

    noise_var = task.sigma1**2
    grid = evaluation_grid(task.prior.widen(noise_var), cfg.grid_points)[:, None]
    exact = task.prior.posterior_mean(grid, noise_var)
    px, ps = predict(f_x, grid), predict(f_s, grid)

    # twin disagreement at matching checkpoints
    trajectory = []
    for snap_x, snap_s in zip(rec_x.snapshots, rec_s.snapshots):
        a = _regressor(task.prior.dim, task.prior.dim, cfg.hidden, cfg.seed)
        b = _regressor(task.prior.dim, task.prior.dim, cfg.hidden, cfg.seed)
        a.load_state(snap_x)
        b.load_state(snap_s)
        trajectory.append(nmse(predict(a, grid), predict(b, grid)))
    return {
        "nmse_twins": nmse(px, ps),
        "nmse_fx_exact": nmse(px, exact),
        "nmse_fs_exact": nmse(ps, exact),
        "twin_trajectory": trajectory,
        "train_x": rec_x.to_dict(),
        "train_s": rec_s.to_dict(),
        "elapsed_s": time.time() - t0,
    }


def fraction_decreasing(values) -> float:
    v = np.asarray(values, dtype=np.float64)
    if len(v) < 2:
        return 1.0
    return float(np.mean(np.diff(v) < 0))


# ---------------------------------------------------------------- discrete oracle


@dataclass
class DiscreteNoiseReport:
    y_values: np.ndarray
    mean_x: np.ndarray
    mean_s: np.ndarray

    @property
    def max_abs_diff(self) -> float:
        return float(np.max(np.abs(self.mean_x - self.mean_s)))


def discrete_noise2noise_oracle(s_support, p_s, n1_support, p_n1, n2_support, p_n2, atol: float = 1e-12) -> DiscreteNoiseReport:
    """Enumerate E[x|y] and E[s|y] for y = s + n1, x = s + n2 with independent s, n1, n2."""
    s, ps = np.asarray(s_support, float), np.asarray(p_s, float)
    n1, pn1 = np.asarray(n1_support, float), np.asarray(p_n1, float)
    n2, pn2 = np.asarray(n2_support, float), np.asarray(p_n2, float)
    for name, p in (("s", ps), ("n1", pn1), ("n2", pn2)):
        if np.any(p < 0) or abs(p.sum() - 1) > 1e-12:
            raise ValueError(f"probabilities of {name} must lie on the simplex")
    mean_n2 = float(pn2 @ n2)
    if abs(mean_n2) > atol:
        raise ValueError(f"target noise has mean {mean_n2}; the equivalence needs zero-mean n2")

    S, N1, N2 = np.meshgrid(s, n1, n2, indexing="ij")
    P = ps[:, None, None] * pn1[None, :, None] * pn2[None, None, :]
    Y = np.round(S + N1, 12)
    y_vals, inv = np.unique(Y.ravel(), return_inverse=True)
    mass = np.bincount(inv, weights=P.ravel())
    keep = mass > 0
    ex = np.bincount(inv, weights=(P * (S + N2)).ravel())[keep] / mass[keep]
    es = np.bincount(inv, weights=(P * S).ravel())[keep] / mass[keep]
    return DiscreteNoiseReport(y_vals[keep], ex, es)
