"""Functional front-end for the registered tensor operations."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .tensor import Tensor, apply


def add(a, b) -> Tensor:
    return apply("add", a, b)


def sub(a, b) -> Tensor:
    return apply("sub", a, b)


def mul(a, b) -> Tensor:
    return apply("mul", a, b)


def div(a, b) -> Tensor:
    return apply("div", a, b)


def matmul(a, b) -> Tensor:
    return apply("matmul", a, b)


def relu(a) -> Tensor:
    return apply("relu", a)


def tanh(a) -> Tensor:
    return apply("tanh", a)


def exp(a) -> Tensor:
    return apply("exp", a)


def log(a) -> Tensor:
    return apply("log", a)


def square(a) -> Tensor:
    return apply("square", a)


def sum(a, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    return apply("sum", a, axis=axis, keepdims=keepdims)


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    return apply("mean", a, axis=axis, keepdims=keepdims)


def softmax(a, axis: int = -1) -> Tensor:
    return apply("softmax", a, axis=axis)


def log_softmax(a, axis: int = -1) -> Tensor:
    return apply("log_softmax", a, axis=axis)


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    return apply("concat", *tensors, axis=axis)


def reshape(a, shape: Sequence[int]) -> Tensor:
    return apply("reshape", a, shape=tuple(shape))


def maxpool2d(a, k: int = 2) -> Tensor:
    return apply("maxpool2d", a, k=k)


def conv2d(x, w, b, stride: int = 1) -> Tensor:
    return apply("conv2d", x, w, b, stride=stride)


def weighted_l2(pred: Tensor, target, weights=None) -> Tensor:
    """sum_r w_r ||pred_r - target_r||^2 ; uniform weights give the batch mean."""
    sq = sum(square(sub(pred, target)), axis=1)
    if weights is None:
        return mean(sq)
    return sum(mul(sq, np.asarray(weights, dtype=np.float64)))


def weighted_cross_entropy(logits: Tensor, target, weights=None) -> Tensor:
    """sum_r w_r CE(softmax(logits_r), target_r) with CE(a, b) = -sum_i b_i log a_i."""
    nll = neg_sum(mul(log_softmax(logits, axis=1), target), axis=1)
    if weights is None:
        return mean(nll)
    return sum(mul(nll, np.asarray(weights, dtype=np.float64)))


def neg_sum(a, axis=None) -> Tensor:
    return apply("neg", sum(a, axis=axis))
