"""Append-only JSON-lines experiment records."""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

SCHEMA_VERSION = 1


class RecordError(ValueError):
    pass


def _encode_floats(obj):
    # json has no inf/nan literal in strict mode; keep them as tagged strings
    if isinstance(obj, float):
        if math.isnan(obj):
            return "NaN"
        if math.isinf(obj):
            return "Infinity" if obj > 0 else "-Infinity"
        return obj
    if isinstance(obj, dict):
        return {k: _encode_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_encode_floats(v) for v in obj]
    return obj


_SPECIAL = {"NaN": math.nan, "Infinity": math.inf, "-Infinity": -math.inf}


def _decode_floats(obj):
    if isinstance(obj, str) and obj in _SPECIAL:
        return _SPECIAL[obj]
    if isinstance(obj, dict):
        return {k: _decode_floats(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_decode_floats(v) for v in obj]
    return obj


def config_hash(config: dict) -> str:
    """Content hash of a config snapshot, git-blob style (sha1 over a canonical dump)."""
    body = json.dumps(config, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha1(b"blob %d\0" % len(body) + body).hexdigest()


@dataclass
class ExperimentRecord:
    kind: str
    config: dict
    metrics: dict
    started: str
    finished: str
    artifacts: dict = field(default_factory=dict)
    config_hash: str = ""
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self) -> None:
        if not self.config_hash:
            self.config_hash = config_hash(self.config)

    def to_json(self) -> str:
        # repr-based float output is the shortest string that round-trips exactly
        return json.dumps(_encode_floats(asdict(self)), sort_keys=True, ensure_ascii=False)

    @classmethod
    def from_json(cls, line: str) -> "ExperimentRecord":
        d = _decode_floats(json.loads(line))
        if d.get("schema_version") != SCHEMA_VERSION:
            raise RecordError(f"unsupported schema version {d.get('schema_version')!r}")
        return cls(**d)


def write_record(path, record: ExperimentRecord) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("a", encoding="utf-8") as fh:
        fh.write(record.to_json() + "\n")


def read_records(path) -> list[ExperimentRecord]:
    out = []
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append(ExperimentRecord.from_json(line))
            except RecordError as e:
                raise RecordError(f"{path}:{lineno}: {e}") from None
            except (ValueError, TypeError) as e:
                raise RecordError(f"{path}:{lineno}: malformed record ({e})") from None
    return out


def read_record(path) -> ExperimentRecord:
    """The last record in ``path``."""
    recs = read_records(path)
    if not recs:
        raise RecordError(f"{path}: no records")
    return recs[-1]


def diff_metrics(a: dict, b: dict, prefix: str = "") -> list[str]:
    """Keys whose values differ bitwise (floats compared by their bit pattern)."""
    out = []
    for k in sorted(set(a) | set(b)):
        name = f"{prefix}{k}"
        if k not in a or k not in b:
            out.append(name)
        elif isinstance(a[k], dict) and isinstance(b[k], dict):
            out += diff_metrics(a[k], b[k], name + ".")
        elif not _same(a[k], b[k]):
            out.append(name)
    return out


def _same(x, y) -> bool:
    if isinstance(x, float) and isinstance(y, float):
        return struct.pack("<d", x) == struct.pack("<d", y) or (math.isnan(x) and math.isnan(y))
    if isinstance(x, list) and isinstance(y, list):
        return len(x) == len(y) and all(_same(p, q) for p, q in zip(x, y))
    return x == y
