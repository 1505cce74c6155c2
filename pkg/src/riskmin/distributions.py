"""Exactly computable probability models used as ground truth.

Three families: finite joints ``p(x, y)`` on explicit supports, isotropic
Gaussian mixtures with closed-form densities/scores, and linear-Gaussian
inverse problems ``y = A x (+ noise)`` with conjugate posteriors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from . import rng as rngmod

SIMPLEX_TOL = 1e-12


class ZeroMarginalError(ValueError):
    pass


class SingularSystemError(np.linalg.LinAlgError):
    def __init__(self, cond: float):
        self.cond = cond
        super().__init__(f"observation covariance is singular (condition number {cond:.3e})")


def as_points(support) -> np.ndarray:
    arr = np.asarray(support, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    return arr


# ---------------------------------------------------------------- finite joints


@dataclass(frozen=True)
class DiscreteJoint:
    """``prob[i, j] = P(y = y_support[i], x = x_support[j])``."""

    y_support: np.ndarray
    x_support: np.ndarray
    prob: np.ndarray

    def __post_init__(self) -> None:
        ys, xs = as_points(self.y_support), as_points(self.x_support)
        p = np.asarray(self.prob, dtype=np.float64)
        object.__setattr__(self, "y_support", ys)
        object.__setattr__(self, "x_support", xs)
        object.__setattr__(self, "prob", p)
        if p.shape != (len(ys), len(xs)):
            raise ValueError(f"prob shape {p.shape} != ({len(ys)}, {len(xs)})")
        if np.any(p < 0):
            raise ValueError("negative probability")
        if abs(p.sum() - 1.0) > SIMPLEX_TOL:
            raise ValueError(f"probabilities sum to {p.sum()!r}, not 1")
        if np.any(p.sum(axis=1) <= 0):
            raise ZeroMarginalError("some y has zero marginal probability")

    @property
    def n_y(self) -> int:
        return len(self.y_support)

    @property
    def n_x(self) -> int:
        return len(self.x_support)

    def marginal_y(self) -> np.ndarray:
        return self.prob.sum(axis=1)

    def marginal_x(self) -> np.ndarray:
        return self.prob.sum(axis=0)

    def conditional(self, y_index: int) -> np.ndarray:
        return conditional(self, y_index)

    def conditionals(self) -> np.ndarray:
        return self.prob / self.marginal_y()[:, None]

    @classmethod
    def random(cls, gen: np.random.Generator, n_y: int, n_x: int, x_support=None, y_support=None, concentration: float = 1.0):
        p = gen.dirichlet(np.full(n_y * n_x, concentration)).reshape(n_y, n_x)
        p /= p.sum()
        if x_support is None:
            x_support = gen.normal(size=(n_x, 1))
        if y_support is None:
            y_support = np.arange(n_y, dtype=np.float64)[:, None]
        return cls(y_support, x_support, p)

    @classmethod
    def independent(cls, p_y, p_x, y_support=None, x_support=None):
        p_y, p_x = np.asarray(p_y, float), np.asarray(p_x, float)
        ys = np.arange(len(p_y), dtype=float) if y_support is None else y_support
        xs = np.arange(len(p_x), dtype=float) if x_support is None else x_support
        return cls(ys, xs, np.outer(p_y, p_x))

    @classmethod
    def deterministic(cls, y_support, x_support, mapping, p_y):
        """x = h(y): ``mapping[i]`` is the x index paired with y index i."""
        p = np.zeros((len(p_y), len(as_points(x_support))))
        p[np.arange(len(p_y)), mapping] = p_y
        return cls(y_support, x_support, p)

    def to_dict(self) -> dict:
        return {
            "type": "discrete_joint",
            "y_support": self.y_support.tolist(),
            "x_support": self.x_support.tolist(),
            "prob": self.prob.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DiscreteJoint":
        return cls(d["y_support"], d["x_support"], d["prob"])


def conditional(joint: DiscreteJoint, y_index: int) -> np.ndarray:
    """p(x | y_i) over ``joint.x_support``."""
    row = joint.prob[y_index]
    total = row.sum()
    if total <= 0:
        raise ZeroMarginalError(f"P(y_{y_index}) = 0")
    return row / total


def sample_joint(joint: DiscreteJoint, gen: np.random.Generator, n: int) -> np.ndarray:
    """``n`` draws of (y_index, x_index) as an (n, 2) integer array."""
    if n < 1:
        raise ValueError("n must be >= 1")
    flat = joint.prob.reshape(-1)
    cdf = np.cumsum(flat)
    cdf[-1] = 1.0
    cells = np.searchsorted(cdf, gen.random(n), side="right")
    cells = np.minimum(cells, flat.size - 1)
    return np.stack(np.divmod(cells, joint.n_x), axis=1)


# ---------------------------------------------------------------- gaussian mixtures


@dataclass(frozen=True)
class GaussianMixture:
    """Mixture of isotropic Gaussians N(means[k], variances[k] * I)."""

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=np.float64)
        mu = as_points(self.means)
        var = np.asarray(self.variances, dtype=np.float64).reshape(-1)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "variances", var)
        if not (len(w) == len(mu) == len(var)):
            raise ValueError("weights, means and variances must have one entry per component")
        if np.any(w < 0) or abs(w.sum() - 1.0) > SIMPLEX_TOL:
            raise ValueError("mixture weights must lie on the simplex")
        if np.any(var <= 0):
            raise ValueError("component variances must be positive")

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def _points(self, y) -> tuple[np.ndarray, str]:
        """Normalise input to (n, dim) points; the tag records how to shape results."""
        y = np.asarray(y, dtype=np.float64)
        if self.dim == 1:
            if y.ndim == 0:
                return y.reshape(1, 1), "scalar"
            if y.ndim == 1:
                return y[:, None], "flat"
            return y.reshape(-1, 1), "batch"
        if y.ndim == 1:
            return y.reshape(1, self.dim), "scalar"
        return y.reshape(-1, self.dim), "batch"

    @staticmethod
    def _shape(out: np.ndarray, kind: str) -> np.ndarray:
        """Vector results per point: scalar input -> (dim,), flat 1-D input -> (n,)."""
        if kind == "scalar":
            return out[0]
        if kind == "flat" and out.ndim == 2:
            return out[:, 0]
        return out

    def component_log_densities(self, pts: np.ndarray) -> np.ndarray:
        d2 = ((pts[:, None, :] - self.means[None]) ** 2).sum(axis=2)
        return (
            np.log(self.weights)[None]
            - 0.5 * self.dim * np.log(2 * np.pi * self.variances)[None]
            - 0.5 * d2 / self.variances[None]
        )

    def log_density(self, y) -> np.ndarray:
        pts, kind = self._points(y)
        with np.errstate(divide="ignore"):
            out = logsumexp(self.component_log_densities(pts), axis=1)
        return out[0] if kind == "scalar" else out

    def responsibilities(self, y) -> np.ndarray:
        pts, _ = self._points(y)
        with np.errstate(divide="ignore"):
            lc = self.component_log_densities(pts)
        return np.exp(lc - logsumexp(lc, axis=1, keepdims=True))

    def score(self, y) -> np.ndarray:
        return gmm_score(self, y)

    def sample(self, gen: np.random.Generator, n: int) -> np.ndarray:
        comp = gen.choice(len(self.weights), size=n, p=self.weights)
        noise = gen.standard_normal((n, self.dim))
        return self.means[comp] + np.sqrt(self.variances[comp])[:, None] * noise

    def widen(self, noise_var: float) -> "GaussianMixture":
        """Law of y = x + n with x ~ self and n ~ N(0, noise_var I)."""
        return GaussianMixture(self.weights, self.means, self.variances + noise_var)

    def posterior_mean(self, y, noise_var: float) -> np.ndarray:
        """E[x | y] for y = x + N(0, noise_var I), by conjugacy per component."""
        pts, kind = self._points(y)
        r = self.widen(noise_var).responsibilities(pts)
        tau2 = self.variances[None, :, None]
        comp_means = (tau2 * pts[:, None, :] + noise_var * self.means[None]) / (tau2 + noise_var)
        return self._shape((r[:, :, None] * comp_means).sum(axis=1), kind)

    def to_dict(self) -> dict:
        return {
            "type": "gaussian_mixture",
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "variances": self.variances.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GaussianMixture":
        return cls(d["weights"], d["means"], d["variances"])

    @classmethod
    def random(cls, gen: np.random.Generator, n_components: int = 3, dim: int = 1, spread: float = 3.0):
        w = gen.dirichlet(np.full(n_components, 2.0))
        mu = gen.uniform(-spread, spread, size=(n_components, dim))
        var = gen.uniform(0.1, 1.0, size=n_components) ** 2
        return cls(w, mu, var)


def gmm_log_density(gmm: GaussianMixture, y) -> np.ndarray:
    return gmm.log_density(y)


def gmm_score(gmm: GaussianMixture, y) -> np.ndarray:
    """grad_y log p(y): responsibility-weighted component scores -(y - mu_k) / var_k."""
    pts, kind = gmm._points(y)
    r = gmm.responsibilities(pts)
    comp = -(pts[:, None, :] - gmm.means[None]) / gmm.variances[None, :, None]
    return gmm._shape((r[:, :, None] * comp).sum(axis=1), kind)


# ---------------------------------------------------------------- linear-gaussian


@dataclass(frozen=True)
class GaussianLinearModel:
    """x ~ N(mu0, cov0), y = A x + N(0, noise_var I)."""

    mu0: np.ndarray
    cov0: np.ndarray
    A: np.ndarray
    noise_var: float = 0.0

    def __post_init__(self) -> None:
        mu0 = np.asarray(self.mu0, dtype=np.float64).reshape(-1)
        cov0 = np.asarray(self.cov0, dtype=np.float64)
        A = np.atleast_2d(np.asarray(self.A, dtype=np.float64))
        object.__setattr__(self, "mu0", mu0)
        object.__setattr__(self, "cov0", cov0)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "noise_var", float(self.noise_var))
        d = mu0.size
        if cov0.shape != (d, d) or A.shape[1] != d:
            raise ValueError(f"inconsistent dims: mu0 {mu0.shape}, cov0 {cov0.shape}, A {A.shape}")
        if A.shape[0] > d:
            raise ValueError("operator must not have more rows than columns")
        if np.max(np.abs(cov0 - cov0.T)) > 1e-12:
            raise ValueError("prior covariance is not symmetric")
        if self.noise_var < 0:
            raise ValueError("noise variance must be >= 0")

    @property
    def d(self) -> int:
        return self.mu0.size

    @property
    def m(self) -> int:
        return self.A.shape[0]

    def observation_cov(self) -> np.ndarray:
        return self.A @ self.cov0 @ self.A.T + self.noise_var * np.eye(self.m)

    def condition_number(self) -> float:
        return float(np.linalg.cond(self.observation_cov()))

    def gain(self) -> np.ndarray:
        """K = cov0 A^T S^{-1}; pseudo-inverse (rcond 1e-10) in the noiseless case."""
        S = self.observation_cov()
        if self.noise_var == 0.0:
            S_inv = np.linalg.pinv(S, rcond=1e-10, hermitian=True)
        else:
            cond = self.condition_number()
            if not np.isfinite(cond) or cond > 1e12:
                raise SingularSystemError(cond)
            S_inv = np.linalg.inv(S)
        return self.cov0 @ self.A.T @ S_inv

    def posterior_cov(self) -> np.ndarray:
        K = self.gain()
        cov = self.cov0 - K @ self.A @ self.cov0
        return 0.5 * (cov + cov.T)

    def posterior_mean(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=np.float64)
        K = self.gain()
        resid = y - self.A @ self.mu0 if y.ndim == 1 else y - (self.A @ self.mu0)[None]
        return self.mu0 + resid @ K.T

    def sample_prior(self, gen: np.random.Generator, n: int) -> np.ndarray:
        return self.mu0 + gen.standard_normal((n, self.d)) @ _psd_sqrt(self.cov0).T

    def observe(self, x: np.ndarray, gen: np.random.Generator | None = None) -> np.ndarray:
        y = x @ self.A.T
        if self.noise_var > 0:
            if gen is None:
                raise ValueError("noisy observation needs a generator")
            y = y + np.sqrt(self.noise_var) * gen.standard_normal(y.shape)
        return y

    def to_dict(self) -> dict:
        return {
            "type": "gaussian_linear",
            "mu0": self.mu0.tolist(),
            "cov0": self.cov0.tolist(),
            "A": self.A.tolist(),
            "noise_var": self.noise_var,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GaussianLinearModel":
        return cls(d["mu0"], d["cov0"], d["A"], d["noise_var"])


def _psd_sqrt(cov: np.ndarray) -> np.ndarray:
    """L with L L^T = cov, tolerating tiny negative eigenvalues."""
    vals, vecs = np.linalg.eigh(cov)
    return vecs * np.sqrt(np.clip(vals, 0.0, None))[None]


def gaussian_linear_posterior(glm: GaussianLinearModel, y) -> tuple[np.ndarray, np.ndarray]:
    return glm.posterior_mean(y), glm.posterior_cov()


def pixel_variance(glm: GaussianLinearModel) -> np.ndarray:
    return np.clip(np.diag(glm.posterior_cov()), 0.0, None)


def posterior_mc_stats(glm: GaussianLinearModel, y, n_samples: int, gen: np.random.Generator):
    """Sample mean and 1/n pixel variance from ``n_samples`` exact posterior draws."""
    if n_samples < 2:
        raise ValueError("n_samples must be >= 2")
    mean = glm.posterior_mean(y)
    L = _psd_sqrt(glm.posterior_cov())
    draws = mean + gen.standard_normal((n_samples, glm.d)) @ L.T
    est_mean = draws.mean(axis=0)
    est_var = ((draws - est_mean) ** 2).mean(axis=0)
    return est_mean, est_var


def downsample_operator(d: int, factor: int) -> np.ndarray:
    """Block-average operator mapping R^d to R^(d/factor)."""
    if d % factor:
        raise ValueError("d must be a multiple of the factor")
    A = np.zeros((d // factor, d))
    for i in range(d // factor):
        A[i, i * factor : (i + 1) * factor] = 1.0 / factor
    return A


def smooth_prior_cov(d: int, length: float = 2.0, scale: float = 1.0, jitter: float = 1e-3) -> np.ndarray:
    idx = np.arange(d)
    cov = scale * np.exp(-0.5 * ((idx[:, None] - idx[None]) / length) ** 2)
    return cov + jitter * np.eye(d)


# ---------------------------------------------------------------- noise pairs


@dataclass(frozen=True)
class NoisePair:
    """Batch of (s, y = s + n1, x = s + n2) with independent n1, n2."""

    s: np.ndarray
    y: np.ndarray
    x: np.ndarray
    sigma1: float
    sigma2: float

    def __len__(self) -> int:
        return len(self.s)


def make_noise2noise_pairs(sample_prior, sigma1: float, sigma2: float, n: int, seed: int, tag: str = "n2n") -> NoisePair:
    """``sample_prior(gen, n)`` draws clean signals; each noise has its own stream."""
    if sigma1 < 0 or sigma2 < 0:
        raise ValueError("noise scales must be >= 0")
    s = np.asarray(sample_prior(rngmod.stream(seed, f"{tag}/signal"), n), dtype=np.float64)
    n1 = rngmod.stream(seed, f"{tag}/input-noise").standard_normal(s.shape)
    n2 = rngmod.stream(seed, f"{tag}/target-noise").standard_normal(s.shape)
    return NoisePair(s=s, y=s + sigma1 * n1, x=s + sigma2 * n2, sigma1=sigma1, sigma2=sigma2)


def distribution_from_dict(d: dict):
    kinds = {
        "discrete_joint": DiscreteJoint,
        "gaussian_mixture": GaussianMixture,
        "gaussian_linear": GaussianLinearModel,
    }
    try:
        return kinds[d["type"]].from_dict(d)
    except KeyError:
        raise ValueError(f"unknown distribution type {d.get('type')!r}") from None
