"""Experiment configuration: INI-style sections with typed scalar values.

    [experiment]
    kind = noisy-labels
    seed = 0

    [train]
    lr = 3e-3
    iterations = 6000

Values parse as int, float, bool (true/false) or comma-separated tuples of
those; anything else stays a string. Keys ending in ``_path`` must name
existing files.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields
from pathlib import Path

from ..models import TrainConfig

KINDS = ("theorem1", "theorem2-gap", "noisy-labels", "noise2noise", "score", "tweedie", "uncertainty")
SECTIONS = ("experiment", "dataset", "model", "train", "params")
TRAIN_KEYS = {f.name for f in fields(TrainConfig)} - {"seed"}


class ConfigError(ValueError):
    pass


def parse_value(text: str):
    text = text.strip()
    if "," in text:
        return tuple(parse_value(p) for p in text.split(",") if p.strip())
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (list, tuple)):
        return ", ".join(format_value(v) for v in value) + ("," if len(value) == 1 else "")
    return repr(value) if isinstance(value, float) else str(value)


@dataclass
class ExperimentConfig:
    kind: str
    seed: int
    dataset: dict = field(default_factory=dict)
    model: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    out: str | None = None

    def validate(self) -> "ExperimentConfig":
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}; expected one of {', '.join(KINDS)}")
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")
        unknown = set(self.train) - TRAIN_KEYS
        if unknown:
            raise ConfigError(f"unknown [train] keys: {', '.join(sorted(unknown))}")
        for section in (self.dataset, self.model, self.params):
            for key, value in section.items():
                if key.endswith("_path") and not Path(str(value)).is_file():
                    raise ConfigError(f"{key}: file not found: {value}")
        return self

    def train_config(self, defaults: TrainConfig, seed: int | None = None) -> TrainConfig:
        merged = {**defaults.__dict__, **self.train}
        if seed is not None:
            merged["seed"] = seed
        try:
            return TrainConfig(**merged)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"[train]: {e}") from None

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "seed": self.seed,
            "dataset": _jsonable(self.dataset),
            "model": _jsonable(self.model),
            "train": _jsonable(self.train),
            "params": _jsonable(self.params),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        return cls(
            kind=d["kind"],
            seed=d["seed"],
            dataset=_tuples(d.get("dataset", {})),
            model=_tuples(d.get("model", {})),
            train=_tuples(d.get("train", {})),
            params=_tuples(d.get("params", {})),
        ).validate()


def _jsonable(section: dict) -> dict:
    return {k: list(v) if isinstance(v, tuple) else v for k, v in section.items()}


def _tuples(section: dict) -> dict:
    return {k: tuple(v) if isinstance(v, list) else v for k, v in section.items()}


def parse_config(text: str, source: str = "<string>") -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text, source=source)
    except configparser.Error as e:
        raise ConfigError(str(e)) from None
    extra = set(cp.sections()) - set(SECTIONS)
    if extra:
        raise ConfigError(f"unknown sections: {', '.join(sorted(extra))}")
    if not cp.has_section("experiment"):
        raise ConfigError("missing [experiment] section")
    sec = {name: {k: parse_value(v) for k, v in cp[name].items()} if cp.has_section(name) else {} for name in SECTIONS}
    exp = sec["experiment"]
    if "kind" not in exp:
        raise ConfigError("[experiment] needs a kind")
    if "seed" not in exp:
        raise ConfigError("[experiment] needs a seed")
    unknown = set(exp) - {"kind", "seed", "out"}
    if unknown:
        raise ConfigError(f"unknown [experiment] keys: {', '.join(sorted(unknown))}")
    return ExperimentConfig(
        kind=str(exp["kind"]),
        seed=exp["seed"],
        dataset=sec["dataset"],
        model=sec["model"],
        train=sec["train"],
        params=sec["params"],
        out=str(exp["out"]) if "out" in exp else None,
    ).validate()


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    return parse_config(path.read_text(encoding="utf-8"), str(path))


def dump_config(cfg: ExperimentConfig) -> str:
    lines = ["[experiment]", f"kind = {cfg.kind}", f"seed = {cfg.seed}"]
    if cfg.out:
        lines.append(f"out = {cfg.out}")
    for name in ("dataset", "model", "train", "params"):
        section = getattr(cfg, name)
        if section:
            lines += ["", f"[{name}]"] + [f"{k} = {format_value(v)}" for k, v in section.items()]
    return "\n".join(lines) + "\n"
