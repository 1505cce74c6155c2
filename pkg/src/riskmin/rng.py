"""Seeded, splittable randomness keyed by (seed, purpose tag, item index).

``stream`` hands out a Philox (counter-based) generator per key, so any
sub-task can be reproduced without replaying the others. ``item_uniforms``
gives one uniform per item index from a stateless counter hash, which keeps
per-item draws independent of batch order or slicing.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def derive_key(seed: int, tag: str, index: int = 0) -> int:
    h = hashlib.blake2b(f"{int(seed)}|{tag}|{int(index)}".encode(), digest_size=16)
    return int.from_bytes(h.digest(), "little")


def stream(seed: int, tag: str, index: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=derive_key(seed, tag, index)))


def _splitmix64(x: np.ndarray) -> np.ndarray:
    x = x + np.uint64(0x9E3779B97F4A7C15)
    x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return x ^ (x >> np.uint64(31))


def item_uniforms(seed: int, tag: str, indices) -> np.ndarray:
    """Uniform [0, 1) draws, one per item index, identical however items are grouped."""
    key = derive_key(seed, tag) & _MASK64
    idx = np.asarray(indices, dtype=np.uint64)
    with np.errstate(over="ignore"):
        bits = _splitmix64(_splitmix64(idx ^ np.uint64(key)))
    return (bits >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))
