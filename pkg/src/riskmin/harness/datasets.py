"""Synthetic labelled datasets."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .. import rng as rngmod


class OverlapError(ValueError):
    pass


@dataclass(frozen=True)
class LabeledData:
    inputs: np.ndarray
    labels: np.ndarray
    n_classes: int

    def __len__(self) -> int:
        return len(self.labels)

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.inputs).tobytes())
        h.update(np.ascontiguousarray(self.labels).astype(np.int64).tobytes())
        return h.hexdigest()


def blob_centers(n_classes: int, radius: float = 1.0) -> np.ndarray:
    angles = 2 * np.pi * np.arange(n_classes) / n_classes
    return radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)


def synth_blobs(n_classes: int, n_per_class: int, spread: float, seed: int, tag: str = "blobs", radius: float = 1.0) -> LabeledData:
    """Isotropic 2-D Gaussian blobs centred on a circle, one per class.

    Refuses configurations where neighbouring classes come within 6 standard
    deviations of each other, so every point has an unambiguous true class.
    """
    if n_per_class <= 0:
        raise ValueError("empty dataset: n_per_class must be positive")
    if n_classes < 2:
        raise ValueError("need at least two classes")
    chord = 2 * radius * np.sin(np.pi / n_classes)
    if chord <= 12 * spread:
        raise OverlapError(f"class regions overlap at 6 sigma (centre gap {chord:.4f}, spread {spread})")
    gen = rngmod.stream(seed, tag)
    centers = blob_centers(n_classes, radius)
    labels = np.repeat(np.arange(n_classes), n_per_class)
    pts = centers[labels] + spread * gen.standard_normal((len(labels), 2))
    return LabeledData(pts, labels, n_classes)


def nearest_center_labels(points: np.ndarray, n_classes: int, radius: float = 1.0) -> np.ndarray:
    c = blob_centers(n_classes, radius)
    return np.argmin(((points[:, None, :] - c[None]) ** 2).sum(axis=2), axis=1)
