"""Command-line driver: run experiments, summarise records, replay them.

Exit codes: 0 ok, 1 usage or config error, 2 runtime error, 3 replay mismatch.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

from threadpoolctl import threadpool_limits

from .config import ConfigError, ExperimentConfig, load_config
from .experiments import RunResult, run_experiment
from .records import ExperimentRecord, RecordError, diff_metrics, read_records, write_record

SUBCOMMANDS = {
    "verify-theorem1": "theorem1",
    "gap-check": "theorem2-gap",
    "noisy-labels": "noisy-labels",
    "noise2noise": "noise2noise",
    "score": "score",
    "tweedie": "tweedie",
    "uncertainty": "uncertainty",
}
RECORDS_FILE = "records.jsonl"

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_MISMATCH = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="riskmin", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    def common(p):
        p.add_argument("--out", help="output directory (default: $RISKMIN_OUT, config out, or ./runs)")
        p.add_argument("--threads", type=int, help="cap BLAS/OpenMP threads")

    for name, kind in SUBCOMMANDS.items():
        p = sub.add_parser(name, help=f"run the {kind} experiment")
        p.add_argument("--config", help="experiment config file (defaults apply when omitted)")
        p.add_argument("--seed", type=int, help="override the config seed")
        common(p)

    p = sub.add_parser("report", help="plain-text summary of a records file")
    p.add_argument("records", nargs="?", help=f"records file (default: OUT/{RECORDS_FILE})")
    common(p)

    p = sub.add_parser("replay", help="re-run recorded configs and compare metrics bitwise")
    p.add_argument("records", nargs="?", help=f"records file (default: OUT/{RECORDS_FILE})")
    p.add_argument("--index", type=int, help="replay only this record (0-based)")
    common(p)
    return parser


def _out_dir(args, cfg: ExperimentConfig | None = None) -> Path:
    if args.out:
        return Path(args.out)
    if os.environ.get("RISKMIN_OUT"):
        return Path(os.environ["RISKMIN_OUT"])
    if cfg is not None and cfg.out:
        return Path(cfg.out)
    return Path("runs")


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="milliseconds")


def write_csv(path: Path, rows: list[dict]) -> None:
    if not rows:
        path.write_text("")
        return
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        for r in rows:
            w.writerow({k: json.dumps(v) if isinstance(v, (list, dict)) else v for k, v in r.items()})


def execute(cfg: ExperimentConfig, out: Path) -> ExperimentRecord:
    started = _now()
    result: RunResult = run_experiment(cfg)
    finished = _now()
    snapshot = cfg.to_dict()
    rec = ExperimentRecord(cfg.kind, snapshot, result.metrics, started, finished)
    out.mkdir(parents=True, exist_ok=True)
    for name, rows in result.tables.items():
        path = out / f"{cfg.kind}-{rec.config_hash[:10]}-{name}.csv"
        write_csv(path, rows)
        rec.artifacts[name] = str(path)
    write_record(out / RECORDS_FILE, rec)
    return rec


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def render_report(records: list[ExperimentRecord]) -> str:
    lines = []
    for i, rec in enumerate(records):
        lines.append(f"[{i}] {rec.kind}  seed={rec.config.get('seed')}  config={rec.config_hash[:10]}  finished={rec.finished}")
        width = max((len(k) for k in rec.metrics), default=0)
        for k, v in rec.metrics.items():
            lines.append(f"    {k:<{width}}  {_fmt(v)}")
    return "\n".join(lines)


def _records_path(args) -> Path:
    return Path(args.records) if args.records else _out_dir(args) / RECORDS_FILE


def cmd_run(args) -> int:
    kind = SUBCOMMANDS[args.command]
    cfg = load_config(args.config) if args.config else ExperimentConfig(kind, 0).validate()
    if cfg.kind != kind:
        raise ConfigError(f"config is for {cfg.kind!r} but the command runs {kind!r}")
    if args.seed is not None:
        cfg.seed = args.seed
        cfg.validate()
    rec = execute(cfg, _out_dir(args, cfg))
    print(render_report([rec]))
    return EXIT_OK


def cmd_report(args) -> int:
    print(render_report(read_records(_records_path(args))))
    return EXIT_OK


def cmd_replay(args) -> int:
    records = read_records(_records_path(args))
    if args.index is not None:
        if not 0 <= args.index < len(records):
            raise ConfigError(f"record index {args.index} out of range (file has {len(records)})")
        records = [records[args.index]]
    status = EXIT_OK
    for rec in records:
        cfg = ExperimentConfig.from_dict(rec.config)
        fresh = run_experiment(cfg).metrics
        # json round trip so the comparison sees exactly what a record stores
        fresh = ExperimentRecord.from_json(ExperimentRecord(rec.kind, rec.config, fresh, "", "").to_json()).metrics
        diffs = diff_metrics(rec.metrics, fresh)
        if diffs:
            status = EXIT_MISMATCH
            print(f"MISMATCH {rec.kind} {rec.config_hash[:10]}: {', '.join(diffs)}", file=sys.stderr)
        else:
            print(f"ok {rec.kind} {rec.config_hash[:10]} ({len(rec.metrics)} metrics identical)")
    return status


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(f"riskmin: error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except SystemExit as e:  # --help
        return int(e.code or 0)
    handler = cmd_report if args.command == "report" else cmd_replay if args.command == "replay" else cmd_run
    try:
        if args.threads is not None:
            if args.threads < 1:
                raise ConfigError("--threads must be >= 1")
            with threadpool_limits(limits=args.threads):
                return handler(args)
        return handler(args)
    except (ConfigError, RecordError, FileNotFoundError) as e:
        print(f"riskmin: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as e:  # noqa: BLE001 - any failure inside an experiment is a runtime error
        print(f"riskmin: runtime error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
