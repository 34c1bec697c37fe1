"""Run configuration: one flat record of every knob, validated up front."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Mapping, Optional

from .errors import UsageError
from .topology import is_power_of_two

METHODS = ("crossover", "hier-crossover", "sgp-pushsum", "ring", "allreduce")

# Link presets: bandwidth in bytes/s. Latencies are simulation assumptions.
LINK_PRESETS = {
    "aws": {"bandwidth": 3125e6 / 8, "latency": 1e-4},
    "neuron": {"bandwidth": 56000e6 / 8, "latency": 2e-6},
}


@dataclass(frozen=True)
class RunConfig:
    method: str = "crossover"
    workers: int = 8
    segments: int = 4
    layers: int = 8
    rounds: int = 800
    seed: int = 0
    group_size: int = 2
    dim: int = 64
    comm_interval: int = 1
    lr: float = 0.01
    momentum: float = 0.5
    weight_decay: float = 0.0
    lars_coeff: float = 0.0  # 0 disables LARS
    warmup_epochs: int = 0
    rounds_per_epoch: int = 10
    heterogeneity: float = 0.1
    latency: float = LINK_PRESETS["aws"]["latency"]
    bandwidth: float = LINK_PRESETS["aws"]["bandwidth"]
    element_size: int = 8
    topo_overhead: float = 0.0
    output_path: str = "metrics.csv"

    def __post_init__(self):
        validate(self)

    def replace(self, **changes: Any) -> RunConfig:
        return dataclasses.replace(self, **changes)

    @property
    def optimizer_lars_coeff(self) -> Optional[float]:
        return self.lars_coeff if self.lars_coeff > 0 else None


FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}
SWEEPABLE = tuple(name for name in FIELD_TYPES if name != "output_path")


def _fail(key: str, message: str) -> None:
    raise UsageError(f"{key}: {message}")


def validate(cfg: RunConfig) -> None:
    if cfg.method not in METHODS:
        _fail("method", f"unknown method {cfg.method!r}; choose one of {', '.join(METHODS)}")
    if cfg.workers < 2:
        _fail("workers", f"need at least 2 workers, got {cfg.workers}")
    if cfg.method == "sgp-pushsum" and not is_power_of_two(cfg.workers):
        _fail("workers", f"sgp-pushsum requires a power-of-two worker count, got {cfg.workers}")
    if cfg.dim < 1:
        _fail("dim", f"must be >= 1, got {cfg.dim}")
    if not 1 <= cfg.layers <= cfg.dim:
        _fail("layers", f"must lie in [1, dim={cfg.dim}], got {cfg.layers}")
    if not 1 <= cfg.segments <= cfg.layers:
        _fail("segments", f"must lie in [1, layers={cfg.layers}], got {cfg.segments}")
    if cfg.rounds < 0:
        _fail("rounds", f"must be >= 0, got {cfg.rounds}")
    if not 1 <= cfg.group_size <= cfg.workers:
        _fail("group_size", f"must lie in [1, workers={cfg.workers}], got {cfg.group_size}")
    if cfg.comm_interval < 1:
        _fail("comm_interval", f"must be >= 1, got {cfg.comm_interval}")
    if not cfg.lr > 0:
        _fail("lr", f"must be positive, got {cfg.lr}")
    if not 0 <= cfg.momentum < 1:
        _fail("momentum", f"must lie in [0, 1), got {cfg.momentum}")
    if cfg.weight_decay < 0:
        _fail("weight_decay", f"must be nonnegative, got {cfg.weight_decay}")
    if cfg.lars_coeff < 0:
        _fail("lars_coeff", f"must be nonnegative, got {cfg.lars_coeff}")
    if cfg.warmup_epochs < 0:
        _fail("warmup_epochs", f"must be nonnegative, got {cfg.warmup_epochs}")
    if cfg.rounds_per_epoch < 1:
        _fail("rounds_per_epoch", f"must be >= 1, got {cfg.rounds_per_epoch}")
    if cfg.heterogeneity < 0:
        _fail("heterogeneity", f"must be nonnegative, got {cfg.heterogeneity}")
    if cfg.latency < 0:
        _fail("latency", f"must be nonnegative, got {cfg.latency}")
    if not cfg.bandwidth > 0:
        _fail("bandwidth", f"must be positive, got {cfg.bandwidth}")
    if cfg.element_size not in (2, 4, 8):
        _fail("element_size", f"must be 2, 4 or 8 bytes, got {cfg.element_size}")
    if cfg.topo_overhead < 0:
        _fail("topo_overhead", f"must be nonnegative, got {cfg.topo_overhead}")


def coerce(key: str, raw: Any) -> Any:
    """Convert a raw string (or value) to the declared type of ``key``."""
    if key not in FIELD_TYPES:
        raise UsageError(f"{key}: unknown configuration key")
    kind = FIELD_TYPES[key]
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    try:
        if kind == "int":
            return int(text, 0)
        if kind == "float":
            return float(text)
    except ValueError:
        raise UsageError(f"{key}: expected {kind}, got {raw!r}") from None
    return text


def read_config_file(path: str | Path) -> dict[str, Any]:
    """Parse a flat ``key = value`` file; ``#`` starts a comment."""
    values: dict[str, Any] = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise UsageError(f"config: cannot read {path}: {exc.strerror}") from None
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise UsageError(f"config: line {lineno} is not key=value: {line!r}")
        key = key.strip().replace("-", "_")
        values[key] = coerce(key, value)
    return values


def build_config(file_values: Mapping[str, Any] | None = None, overrides: Mapping[str, Any] | None = None) -> RunConfig:
    merged = dict(file_values or {})
    merged.update({k: v for k, v in (overrides or {}).items() if v is not None})
    for key in merged:
        if key not in FIELD_TYPES:
            raise UsageError(f"{key}: unknown configuration key")
    return RunConfig(**{k: coerce(k, v) for k, v in merged.items()})
