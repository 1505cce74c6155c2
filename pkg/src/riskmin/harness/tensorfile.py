"""RMT1: a minimal little-endian container for float64 arrays.

Layout: b"RMT1", u8 dtype code (0 = f64), u8 rank, rank x u64 extents, payload.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"RMT1"
DTYPE_F64 = 0


class TensorFileError(ValueError):
    pass


def encode(array) -> bytes:
    a = np.asarray(array, dtype="<f8", order="C")  # ascontiguousarray would promote rank 0 to 1
    if a.ndim > 255:
        raise TensorFileError("rank above 255 is not representable")
    head = MAGIC + struct.pack("<BB", DTYPE_F64, a.ndim) + struct.pack(f"<{a.ndim}Q", *a.shape)
    return head + a.tobytes()


def decode(raw: bytes) -> np.ndarray:
    if raw[:4] != MAGIC:
        raise TensorFileError(f"bad magic {raw[:4]!r}")
    if len(raw) < 6:
        raise TensorFileError("truncated header")
    code, rank = struct.unpack("<BB", raw[4:6])
    if code != DTYPE_F64:
        raise TensorFileError(f"unsupported dtype code {code}")
    end = 6 + 8 * rank
    if len(raw) < end:
        raise TensorFileError("truncated extents")
    shape = struct.unpack(f"<{rank}Q", raw[6:end])
    count = int(np.prod(shape, dtype=np.uint64)) if rank else 1
    if len(raw) - end != 8 * count:
        raise TensorFileError(f"payload is {len(raw) - end} bytes, extents {shape} need {8 * count}")
    return np.frombuffer(raw, dtype="<f8", offset=end).reshape(shape).astype(np.float64)


def save(path, array) -> None:
    Path(path).write_bytes(encode(array))


def load(path) -> np.ndarray:
    return decode(Path(path).read_bytes())


def save_state(directory, arrays) -> list[Path]:
    """Write a model snapshot as one RMT1 file per parameter array."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, a in enumerate(arrays):
        p = directory / f"param_{i:03d}.rmt"
        save(p, a)
        paths.append(p)
    return paths


def load_state(directory) -> list[np.ndarray]:
    paths = sorted(Path(directory).glob("param_*.rmt"))
    if not paths:
        raise TensorFileError(f"no parameter files in {directory}")
    return [load(p) for p in paths]
