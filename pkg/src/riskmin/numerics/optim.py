"""SGD, Adam and AdamW updates over lists of parameter tensors."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .tensor import Tensor

KINDS = ("sgd", "adam", "adamw")


class NonFiniteGradient(FloatingPointError):
    def __init__(self, index: int):
        self.index = index
        super().__init__(f"non-finite gradient for parameter {index}")


@dataclass
class OptimizerState:
    kind: str
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown optimizer kind {self.kind!r}; expected one of {KINDS}")


def make_optimizer(kind: str, lr: float, weight_decay: float | None = None, **kw) -> OptimizerState:
    # AdamW decay defaults to 0.01 (the usual library default); the others take none.
    if weight_decay is None:
        weight_decay = 0.01 if kind == "adamw" else 0.0
    return OptimizerState(kind=kind, lr=lr, weight_decay=weight_decay, **kw)


def optimizer_step(state: OptimizerState, params: Sequence[np.ndarray], grads: Sequence[np.ndarray]) -> None:
    """Update ``params`` in place and advance ``state`` by one step."""
    if len(params) != len(grads):
        raise ValueError(f"{len(params)} parameters but {len(grads)} gradients")
    for i, (p, g) in enumerate(zip(params, grads)):
        if p.shape != g.shape:
            raise ValueError(f"parameter {i}: shape {p.shape} but gradient {g.shape}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient(i)

    state.step += 1
    if state.kind == "sgd":
        for p, g in zip(params, grads):
            if state.weight_decay:
                g = g + state.weight_decay * p
            p -= state.lr * g
        return

    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    b1, b2, t = state.beta1, state.beta2, state.step
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if state.kind == "adamw" and state.weight_decay:
            p *= 1.0 - state.lr * state.weight_decay
        elif state.kind == "adam" and state.weight_decay:
            g = g + state.weight_decay * p
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


def step_tensors(state: OptimizerState, params: Sequence[Tensor]) -> None:
    """Apply one update using the ``.grad`` fields, then clear them."""
    grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in params]
    optimizer_step(state, [p.data for p in params], grads)
    for p in params:
        p.grad = None
