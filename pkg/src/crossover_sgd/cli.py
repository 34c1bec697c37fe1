"""Command-line front end.

    crossover-sim [--config FILE] [--KEY VALUE ...] [--vary KEY=V1,V2,...]

Flags override config-file values. ``--vary`` turns the run into a sweep that
writes one CSV per value plus an index file.

Exit codes: 0 success, 1 usage error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import fields
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .config import FIELD_TYPES, METHODS, SWEEPABLE, RunConfig, build_config, coerce, read_config_file
from .errors import DivergedError, UsageError
from .harness import MetricsRecord, iter_train

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2

CSV_COLUMNS = ("round", "sim_time_s", "global_loss", "consensus_distance", "bytes_max", "bytes_min")
INDEX_COLUMNS = ("value", "final_loss", "final_consensus", "total_time_s")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="crossover-sim",
        description="Simulate Crossover-SGD and baseline averaging protocols on a synthetic task.",
    )
    parser.add_argument("--config", metavar="FILE", help="key=value config file; flags override it")
    parser.add_argument(
        "--vary",
        metavar="KEY=V1,V2,...",
        help="sweep one config key over a list of values",
    )
    defaults = RunConfig()
    for f in fields(RunConfig):
        names = [f"--{f.name}"]
        if "_" in f.name:
            names.append(f"--{f.name.replace('_', '-')}")
        extra = f"; one of {', '.join(METHODS)}" if f.name == "method" else ""
        parser.add_argument(
            *names,
            dest=f.name,
            default=None,
            metavar=f.type.upper(),
            help=f"default: {getattr(defaults, f.name)}{extra}",
        )
    return parser


def parse_config(argv: Optional[Sequence[str]] = None) -> tuple[RunConfig, Optional[tuple[str, list]]]:
    """Return the run config and, for sweeps, ``(key, values)``."""
    args = build_parser().parse_args(argv)
    file_values = read_config_file(args.config) if args.config else {}
    overrides = {name: getattr(args, name) for name in FIELD_TYPES}
    cfg = build_config(file_values, overrides)
    vary = _parse_vary(args.vary) if args.vary else None
    return cfg, vary


def _parse_vary(spec: str) -> tuple[str, list]:
    key, sep, raw = spec.partition("=")
    key = key.strip().replace("-", "_")
    if not sep or not raw.strip():
        raise UsageError(f"vary: expected KEY=V1,V2,..., got {spec!r}")
    if key not in SWEEPABLE:
        raise UsageError(f"{key}: not a sweepable key; choose one of {', '.join(SWEEPABLE)}")
    return key, [coerce(key, v) for v in raw.split(",")]


def format_float(x: float) -> str:
    # repr is the shortest string that round-trips exactly
    return repr(float(x))


def write_metrics_csv(path: str | Path, records: Iterable[MetricsRecord]) -> list[MetricsRecord]:
    """Stream records into ``path``; returns what was written.

    If the iterable raises mid-way, everything before the failure is already
    flushed to disk.
    """
    written = []
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in records:
            writer.writerow(
                [r.round, format_float(r.sim_time), format_float(r.global_loss),
                 format_float(r.consensus), r.bytes_max, r.bytes_min]
            )
            fh.flush()
            written.append(r)
    return written


def read_metrics_csv(path: str | Path) -> list[MetricsRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != CSV_COLUMNS:
            raise ValueError(f"unexpected CSV header {header}")
        return [
            MetricsRecord(int(a), float(b), float(c), float(d), int(e), int(f))
            for a, b, c, d, e, f in reader
        ]


def run(cfg: RunConfig, out=None) -> tuple[int, list[MetricsRecord]]:
    """Run one configuration, write its CSV and print a summary line."""
    out = out or sys.stdout
    records: list[MetricsRecord] = []
    status = EXIT_OK
    try:
        records = write_metrics_csv(cfg.output_path, iter_train(cfg))
    except DivergedError as exc:
        records = exc.records
        print(f"error: diverged: {exc}", file=sys.stderr)
        status = EXIT_RUNTIME
    except OSError as exc:
        print(f"error: cannot write {cfg.output_path}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_RUNTIME, records
    print(summary_line(cfg, records), file=out)
    return status, records


def summary_line(cfg: RunConfig, records: Sequence[MetricsRecord]) -> str:
    if not records:
        return f"method={cfg.method} rounds=0 final_loss=n/a final_consensus=n/a total_sim_time_s=0.0"
    last = records[-1]
    return (
        f"method={cfg.method} rounds={last.round} final_loss={last.global_loss:.6g} "
        f"final_consensus={last.consensus:.6g} total_sim_time_s={last.sim_time:.6g}"
    )


def sweep_paths(output_path: str | Path, key: str, values: Sequence) -> tuple[list[Path], Path]:
    base = Path(output_path)
    stem, suffix = base.stem, base.suffix or ".csv"
    runs = [base.with_name(f"{stem}_{key}-{v}{suffix}") for v in values]
    return runs, base.with_name(f"{stem}_{key}_index{suffix}")


def sweep(cfg: RunConfig, key: str, values: Sequence, out=None) -> int:
    out = out or sys.stdout
    run_paths, index_path = sweep_paths(cfg.output_path, key, values)
    # build every config first so bad values fail before any run starts
    configs = [cfg.replace(**{key: v, "output_path": str(p)}) for v, p in zip(values, run_paths)]
    status = EXIT_OK
    rows = []
    for value, c in zip(values, configs):
        code, records = run(c, out)
        status = max(status, code)
        last = records[-1] if records else None
        rows.append([
            value,
            format_float(last.global_loss) if last else "",
            format_float(last.consensus) if last else "",
            format_float(last.sim_time if last else 0.0),
        ])
    try:
        with open(index_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(INDEX_COLUMNS)
            writer.writerows(rows)
    except OSError as exc:
        print(f"error: cannot write {index_path}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"index written to {index_path}", file=out)
    return status


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        cfg, vary = parse_config(argv)
        if vary is not None:
            key, values = vary
            for v in values:
                cfg.replace(**{key: v})
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if vary is not None:
        return sweep(cfg, key, values)
    status, _ = run(cfg)
    return status


if __name__ == "__main__":
    sys.exit(main())
