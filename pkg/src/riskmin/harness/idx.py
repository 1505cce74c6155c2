"""Reader for the big-endian IDX format used by MNIST."""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
MAX_ELEMENTS = 1 << 32


class IdxError(ValueError):
    pass


class BadMagic(IdxError):
    pass


class Truncated(IdxError):
    pass


class DimOverflow(IdxError):
    pass


def parse_idx(raw: bytes) -> np.ndarray:
    """Decode unsigned-byte IDX content to a uint8 array of the declared shape."""
    if len(raw) < 4:
        raise Truncated("file shorter than the 4-byte magic")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic not in (IMAGE_MAGIC, LABEL_MAGIC):
        raise BadMagic(f"unexpected magic 0x{magic:08x}")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise Truncated("header ends before all dimensions are declared")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    count = 1
    for d in dims:
        count *= d
        if count > MAX_ELEMENTS:
            raise DimOverflow(f"declared dims {dims} exceed {MAX_ELEMENTS} elements")
    if len(raw) - header < count:
        raise Truncated(f"payload has {len(raw) - header} bytes, dims {dims} need {count}")
    return np.frombuffer(raw, dtype=np.uint8, count=count, offset=header).reshape(dims)


def load_idx(path) -> np.ndarray:
    """Load an IDX file as float64: images scaled to [0, 1] by /255, labels as-is."""
    raw = Path(path).read_bytes()
    arr = parse_idx(raw).astype(np.float64)
    (magic,) = struct.unpack(">I", raw[:4])
    return arr / 255.0 if magic == IMAGE_MAGIC else arr


def write_idx(path, array: np.ndarray) -> None:
    """Write uint8 data (rank 1 labels or rank 3 images) in IDX layout."""
    a = np.asarray(array, dtype=np.uint8)
    magic = IMAGE_MAGIC if a.ndim == 3 else LABEL_MAGIC
    if a.ndim not in (1, 3):
        raise ValueError("IDX writer supports rank 1 (labels) or rank 3 (images)")
    Path(path).write_bytes(struct.pack(">I", magic) + struct.pack(f">{a.ndim}I", *a.shape) + a.tobytes())
