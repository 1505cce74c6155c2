"""Losses, conditional risk, and exact / brute-force conditional-risk minimizers.

Notation: ``cond`` is p(x | y) over an explicit ``x_support``; the label map
``g`` turns (x, y) into a training target; ``z`` is a candidate output.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .distributions import DiscreteJoint, as_points

SIMPLEX_ATOL = 1e-9


class _OutOfDomain:
    """Cross-entropy value for arguments off the probability simplex.

    Kept distinct from ``inf`` so aggregation can short-circuit instead of
    propagating NaN through ``0 * inf``.
    """

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "OUT_OF_DOMAIN"

    def __float__(self) -> float:
        return math.inf


OUT_OF_DOMAIN = _OutOfDomain()


def on_simplex(v: np.ndarray, atol: float = SIMPLEX_ATOL) -> bool:
    v = np.asarray(v, dtype=np.float64)
    return bool(np.all(v >= -atol) and abs(v.sum() - 1.0) <= atol)


def _xlogy(b: np.ndarray, a: np.ndarray) -> np.ndarray:
    """b * log(a) with 0 log 0 = 0; b > 0, a = 0 gives -inf."""
    with np.errstate(divide="ignore", invalid="ignore"):
        out = b * np.log(a)
    return np.where(b == 0, 0.0, out)


@dataclass(frozen=True)
class LossFn:
    kind: str  # "l2" | "cross_entropy"

    def __post_init__(self) -> None:
        if self.kind not in ("l2", "cross_entropy"):
            raise ValueError(f"unknown loss {self.kind!r}")

    def __call__(self, a, b):
        return loss_eval(self, a, b)

    def pairwise(self, Z: np.ndarray, G: np.ndarray) -> np.ndarray:
        """Loss matrix ``[L(Z[k], G[j])]`` for many candidates at once (in-domain only)."""
        if self.kind == "l2":
            return ((Z[:, None, :] - G[None, :, :]) ** 2).sum(axis=2)
        return -_xlogy(G[None, :, :], Z[:, None, :]).sum(axis=2)


L2 = LossFn("l2")
CROSS_ENTROPY = LossFn("cross_entropy")


def loss_eval(loss: LossFn, a, b):
    a = np.atleast_1d(np.asarray(a, dtype=np.float64))
    b = np.atleast_1d(np.asarray(b, dtype=np.float64))
    if a.shape != b.shape:
        raise ValueError(f"loss arguments have shapes {a.shape} and {b.shape}")
    if loss.kind == "l2":
        return float(((a - b) ** 2).sum())
    if not (on_simplex(a) and on_simplex(b)):
        return OUT_OF_DOMAIN
    return float(-_xlogy(b, np.clip(a, 0.0, None)).sum())


# ---------------------------------------------------------------- label maps


@dataclass(frozen=True)
class LabelMap:
    """g(x, y). ``noise_var`` feeds ``score_label``; ``mean_fn`` feeds ``squared_residual``."""

    kind: str = "identity_x"
    noise_var: float | None = None
    mean_fn: Callable[[np.ndarray], np.ndarray] | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if self.kind not in ("identity_x", "score_label", "squared_residual"):
            raise ValueError(f"unknown label map {self.kind!r}")
        if self.kind == "score_label" and not (self.noise_var and self.noise_var > 0):
            raise ValueError("score_label needs noise_var > 0")
        if self.kind == "squared_residual" and self.mean_fn is None:
            raise ValueError("squared_residual needs a bound mean function")

    def __call__(self, x, y) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        y = np.atleast_1d(np.asarray(y, dtype=np.float64))
        if self.kind == "identity_x":
            return x
        if self.kind == "score_label":
            # grad_y log N(y; x, s^2 I) for y = x + n
            return (x - y) / self.noise_var
        return (x - np.asarray(self.mean_fn(y), dtype=np.float64)) ** 2


IDENTITY = LabelMap("identity_x")


def label_table(joint: DiscreteJoint, g: LabelMap) -> np.ndarray:
    """``G[i, j] = g(x_j, y_i)``, shape (n_y, n_x, dim W)."""
    return np.stack(
        [np.stack([g(x, y) for x in joint.x_support]) for y in joint.y_support]
    )


def _labels(g: LabelMap, y, x_support) -> np.ndarray:
    return np.stack([g(x, y) for x in as_points(x_support)])


# ---------------------------------------------------------------- conditional risk


def conditional_risk(loss: LossFn, z, cond, g: LabelMap, y, x_support):
    """E_{x|y} L(z, g(x, y)), summed exactly over the support."""
    total = 0.0
    for c, label in zip(np.asarray(cond, dtype=np.float64), _labels(g, y, x_support)):
        if c == 0:
            continue
        v = loss_eval(loss, z, label)
        if v is OUT_OF_DOMAIN:
            return OUT_OF_DOMAIN
        total += c * v
    return total


def zstar_closed_form(loss: LossFn, cond, g: LabelMap, y, x_support) -> np.ndarray:
    """Conditional mean of g for L2; the label distribution q_y for CE on one-hot labels."""
    cond = np.asarray(cond, dtype=np.float64)
    labels = _labels(g, y, x_support)
    if loss.kind == "l2":
        return cond @ labels
    if g.kind != "identity_x" or not _all_one_hot(labels):
        raise ValueError(
            "no closed form for cross-entropy unless labels are one-hot x; use zstar_bruteforce"
        )
    return cond @ labels


def _all_one_hot(labels: np.ndarray) -> bool:
    return bool(np.all((labels == 0) | (labels == 1)) and np.all(labels.sum(axis=1) == 1))


# ---------------------------------------------------------------- brute force


@dataclass(frozen=True)
class GridSpec:
    """Box grid ``lo:hi:step`` per axis, or a barycentric lattice when ``simplex``."""

    lo: tuple[float, ...] = (0.0,)
    hi: tuple[float, ...] = (1.0,)
    step: float = 1e-2
    simplex: bool = False
    dim: int | None = None  # simplex dimension

    def points(self) -> np.ndarray:
        if self.simplex:
            return simplex_lattice(self.dim, self.step)
        if len(self.lo) > 3:
            raise ValueError("box grids are limited to 3 dimensions")
        axes = [np.arange(lo, hi + 0.5 * self.step, self.step) for lo, hi in zip(self.lo, self.hi)]
        if any(len(a) == 0 for a in axes):
            raise ValueError("empty grid")
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh], axis=1)


def simplex_lattice(dim: int, step: float) -> np.ndarray:
    """All points of the simplex with coordinates in multiples of ``step``, lexicographic."""
    if dim is None or dim < 2:
        raise ValueError("simplex lattice needs dim >= 2")
    n = int(round(1.0 / step))
    out: list[tuple[int, ...]] = []

    def rec(prefix: list[int], left: int, slots: int) -> None:
        if slots == 1:
            out.append(tuple(prefix + [left]))
            return
        for k in range(left + 1):
            rec(prefix + [k], left - k, slots - 1)

    rec([], n, dim)
    return np.asarray(out, dtype=np.float64) / n


def golden_section(f: Callable[[float], float], lo: float, hi: float, tol: float = 1e-12, max_iter: int = 200) -> float:
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def zstar_bruteforce(loss: LossFn, cond, g: LabelMap, y, x_support, grid: GridSpec) -> np.ndarray:
    """Grid argmin of the conditional risk, then one golden-section pass per axis.

    Ties on the grid go to the lowest lexicographic index.
    """
    cond = np.asarray(cond, dtype=np.float64)
    labels = _labels(g, y, x_support)
    Z = grid.points()
    if len(Z) == 0:
        raise ValueError("empty grid")
    keep = cond > 0
    risks = loss.pairwise(Z, labels[keep]) @ cond[keep]
    risks = np.where(np.isnan(risks), np.inf, risks)
    best = Z[int(np.argmin(risks))].copy()

    def risk_at(z: np.ndarray) -> float:
        v = conditional_risk(loss, z, cond, g, y, x_support)
        return math.inf if v is OUT_OF_DOMAIN else v

    h = grid.step
    if grid.simplex:
        last = len(best) - 1
        for k in range(last):
            lo_t = -min(best[k], h)
            hi_t = min(best[last], h)
            if hi_t - lo_t <= 0:
                continue

            def along(t, k=k):
                z = best.copy()
                z[k] += t
                z[last] -= t
                if z[k] < 0 or z[last] < 0:
                    return math.inf
                return risk_at(z)

            t = golden_section(along, lo_t, hi_t)
            if along(t) <= risk_at(best):
                best[k] += t
                best[last] -= t
    else:
        for k in range(len(best)):
            lo_k = max(grid.lo[k], best[k] - h)
            hi_k = min(grid.hi[k], best[k] + h)

            def along(v, k=k):
                z = best.copy()
                z[k] = v
                return risk_at(z)

            v = golden_section(along, lo_k, hi_k)
            if along(v) <= risk_at(best):
                best[k] = v
    return best


# ---------------------------------------------------------------- constant-gap check


@dataclass
class GapReport:
    j_zstar: np.ndarray
    j_g: np.ndarray
    differences: np.ndarray
    c_emp: float
    c_theory: float
    c1: float
    c2: float
    max_deviation: float

    @property
    def n_probes(self) -> int:
        return len(self.differences)

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("j_zstar", "j_g", "differences"):
            d[k] = np.asarray(d[k]).tolist()
        return d


def random_probes(gen: np.random.Generator, joint: DiscreteJoint, dim_w: int, k: int, scale: float = 2.0) -> np.ndarray:
    return scale * gen.standard_normal((k, joint.n_y, dim_w))


def theorem2_gap_check(joint: DiscreteJoint, g: LabelMap, probes, gen: np.random.Generator | None = None, loss: LossFn = L2) -> GapReport:
    """Exact E_y||f - z*||^2 and E_{x,y}||f - g||^2 for each probe table f.

    ``probes`` is an array (K, n_y, dim W) or an integer K drawn from ``gen``.
    C1 = E_y||E[g|y]||^2 and C2 = E_{x,y}||g||^2.
    """
    if loss.kind != "l2":
        raise ValueError("the constant-gap identity only holds for the L2 loss")
    G = label_table(joint, g)
    if isinstance(probes, (int, np.integer)):
        if gen is None:
            raise ValueError("drawing probes needs a generator")
        probes = random_probes(gen, joint, G.shape[2], int(probes))
    F = np.asarray(probes, dtype=np.float64)
    if F.ndim != 3 or F.shape[1:] != (joint.n_y, G.shape[2]) or len(F) < 2:
        raise ValueError(f"probes must be (K>=2, {joint.n_y}, {G.shape[2]}), got {F.shape}")
    p = joint.prob
    p_y = joint.marginal_y()
    zstar = np.einsum("ij,ijw->iw", joint.conditionals(), G)
    j_z = np.einsum("i,kiw->k", p_y, (F - zstar[None]) ** 2)
    j_g = np.einsum("ij,kijw->k", p, (F[:, :, None, :] - G[None]) ** 2)
    c1 = float(p_y @ (zstar**2).sum(axis=1))
    c2 = float(np.einsum("ij,ij->", p, (G**2).sum(axis=2)))
    diff = j_g - j_z
    c_emp = float(diff.mean())
    return GapReport(
        j_zstar=j_z,
        j_g=j_g,
        differences=diff,
        c_emp=c_emp,
        c_theory=c2 - c1,
        c1=c1,
        c2=c2,
        max_deviation=float(np.max(np.abs(diff - c_emp))),
    )


# ---------------------------------------------------------------- loss hypothesis probe


@dataclass
class ProbeResult:
    passed: bool
    n_checked: int
    inequality: str | None = None
    a: np.ndarray | None = None
    b: np.ndarray | None = None
    values: tuple[float, float] | None = None


INEQ_AA = "L(a,b) >= L(a,a)"
INEQ_BB = "L(a,b) >= L(b,b)"


def loss_hypothesis_probe(loss, gen: np.random.Generator, n_probes: int, dim: int = 3, inequalities=(INEQ_AA, INEQ_BB), atol: float = 1e-12) -> ProbeResult:
    """Search random (a, b) for a violation of the loss conditions required of L.

    Pairs are drawn from the simplex for cross-entropy and from a standard
    normal otherwise. Returns the first counterexample found.
    """
    if n_probes < 1:
        raise ValueError("n_probes must be >= 1")
    simplex = getattr(loss, "kind", None) == "cross_entropy"
    for t in range(n_probes):
        if simplex:
            a, b = gen.dirichlet(np.ones(dim)), gen.dirichlet(np.ones(dim))
        else:
            a, b = gen.standard_normal(dim), gen.standard_normal(dim)
        lab = float(loss(a, b))
        for ineq in inequalities:
            ref = float(loss(a, a) if ineq == INEQ_AA else loss(b, b))
            if lab < ref - atol:
                return ProbeResult(False, t + 1, ineq, a, b, (lab, ref))
    return ProbeResult(True, n_probes)
