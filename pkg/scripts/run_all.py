#!/usr/bin/env python3
"""Run every desk-scale experiment config, then replay the records bitwise."""

import argparse
import sys
from pathlib import Path

from riskmin.harness.cli import main

CONFIGS = [
    "theorem1.cfg",
    "gap.cfg",
    "noisy_labels_table.cfg",
    "noisy_labels.cfg",
    "tweedie.cfg",
    "score.cfg",
    "noise2noise.cfg",
    "uncertainty.cfg",
]
COMMAND = {
    "theorem1": "verify-theorem1",
    "theorem2-gap": "gap-check",
}


def main_all() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="runs")
    ap.add_argument("--configs", default=str(Path(__file__).resolve().parent.parent / "configs"))
    ap.add_argument("--skip-replay", action="store_true")
    args = ap.parse_args()
    from riskmin.harness.config import load_config

    for name in CONFIGS:
        path = Path(args.configs) / name
        kind = load_config(path).kind
        code = main([COMMAND.get(kind, kind), "--config", str(path), "--out", args.out])
        if code:
            print(f"{name}: exit {code}", file=sys.stderr)
            return code
    if args.skip_replay:
        return 0
    return main(["replay", "--out", args.out])


if __name__ == "__main__":
    sys.exit(main_all())
