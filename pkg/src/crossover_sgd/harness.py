"""Deterministic simulated cluster.

Workers minimise a heterogeneous quadratic, accumulate gradients over the
communication interval, take an optimizer step and then run one round of the
selected protocol. Every round emits a :class:`MetricsRecord` whose
``sim_time`` comes from the communication cost model, not from wall-clock.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .baselines import allreduce_average, pushsum_states_round, ring_round
from .config import METHODS, RunConfig
from .errors import DivergedError, InvalidMethodError
from .gossip import WorkerState, consensus_distance, crossover_round, plan_round, segment_traffic
from .hierarchical import GroupLayout, build_groups, hierarchical_round, leader_round_plan
from .model_core import SegmentPlan, build_segment_plan, split_dim
from .optimizer import OptimizerConfig, accumulate_and_flush, apply_step


@dataclass(frozen=True)
class LinkModel:
    latency: float  # seconds per message
    bandwidth: float  # bytes per second
    element_size: int = 4

    def __post_init__(self):
        if self.latency < 0 or not self.bandwidth > 0 or self.element_size not in (2, 4, 8):
            raise ValueError(f"invalid link model {self}")

    @classmethod
    def aws(cls, element_size: int = 4) -> LinkModel:
        # g4dn.2xlarge: up to 3125 Mb/s
        return cls(latency=1e-4, bandwidth=3125e6 / 8, element_size=element_size)

    @classmethod
    def neuron(cls, element_size: int = 4) -> LinkModel:
        # 56000 Mb/s InfiniBand
        return cls(latency=2e-6, bandwidth=56000e6 / 8, element_size=element_size)


@dataclass(frozen=True)
class QuadraticTask:
    """f_i(x) = 1/2 * sum_j scales[i, j] * (x[j] - targets[i, j])**2"""

    targets: np.ndarray  # (workers, dim)
    scales: np.ndarray  # (workers, dim), strictly positive

    def __post_init__(self):
        if self.targets.shape != self.scales.shape or np.any(self.scales <= 0):
            raise ValueError("quadratic task needs matching shapes and positive scales")

    @property
    def world_size(self) -> int:
        return self.targets.shape[0]

    def optimum(self) -> np.ndarray:
        return (self.scales * self.targets).sum(axis=0) / self.scales.sum(axis=0)

    def global_loss(self, x: np.ndarray) -> float:
        """(1/n) sum_i f_i(x); ``x`` may be a single vector or a stack of them."""
        x = np.atleast_2d(x)
        diff = x[:, None, :] - self.targets[None, :, :]
        with np.errstate(over="ignore", invalid="ignore"):  # divergence is reported by the caller
            per_point = 0.5 * np.einsum("kij,ij->k", diff * diff, self.scales) / self.world_size
            return float(per_point.mean())

    def optimum_loss(self) -> float:
        return self.global_loss(self.optimum())


@dataclass(frozen=True)
class MetricsRecord:
    round: int
    sim_time: float
    global_loss: float
    consensus: float
    bytes_max: int
    bytes_min: int


def make_quadratic_task(workers: int, dim: int, seed: int, heterogeneity: float = 1.0) -> QuadraticTask:
    rng = np.random.default_rng(seed)
    center = rng.normal(size=dim)
    targets = center + heterogeneity * rng.normal(size=(workers, dim))
    scales = rng.uniform(0.5, 1.5, size=(workers, dim))
    return QuadraticTask(targets, scales)


def quadratic_grad(task: QuadraticTask, rank: int, x: np.ndarray) -> np.ndarray:
    return task.scales[rank] * (x - task.targets[rank])


# --- cost model ---------------------------------------------------------------

def _ring_allreduce_time(n: int, model_bytes: float, link: LinkModel) -> float:
    if n <= 1:
        return 0.0
    return 2 * (n - 1) * link.latency + 2 * ((n - 1) / n) * model_bytes / link.bandwidth


def simulate_round_time(
    method: str,
    model_bytes: float,
    segment_count: int,
    world_size: int,
    group_size: int,
    link: LinkModel,
    topo_overhead: float = 0.0,
) -> float:
    """Simulated wall-clock seconds of one communication round.

    Overlapped segment transfers share one NIC, so crossover pays one latency
    plus the whole-model transfer, plus ``topo_overhead`` per segment for
    drawing topologies.
    """
    if not model_bytes > 0:
        raise ValueError(f"model_bytes must be positive, got {model_bytes}")
    transfer = link.latency + model_bytes / link.bandwidth
    if method == "allreduce":
        return _ring_allreduce_time(world_size, model_bytes, link)
    if method == "crossover":
        return transfer + topo_overhead * segment_count
    if method in ("sgp-pushsum", "ring"):
        return transfer
    if method == "hier-crossover":
        num_groups = -(-world_size // group_size)
        largest = -(-world_size // num_groups)
        t = _ring_allreduce_time(largest, model_bytes, link)
        if num_groups > 1:
            t += transfer + topo_overhead * segment_count
        if largest > 1:
            t += transfer  # broadcast back to members
        return t
    raise InvalidMethodError(f"unknown method {method!r}; choose one of {', '.join(METHODS)}")


def ring_allreduce_bytes(n: int, length: int, element_size: int) -> np.ndarray:
    """Per-worker bytes sent + received by a chunked ring AllReduce."""
    if n <= 1:
        return np.zeros(n, dtype=np.int64)
    chunks = np.array([c.size for c in np.array_split(np.arange(length), n)], dtype=np.int64)
    # worker r skips chunk r+1 in reduce-scatter and chunk r+2 in all-gather
    sent = np.array([2 * length - chunks[(r + 1) % n] - chunks[(r + 2) % n] for r in range(n)])
    received = np.roll(sent, 1)
    return (sent + received) * element_size


def hierarchical_bytes(layout: GroupLayout, plan: SegmentPlan, round_plan, element_size: int) -> np.ndarray:
    n = layout.world_size
    model = plan.total_length * element_size
    out = np.zeros(n, dtype=np.int64)
    for members in layout.groups:
        out[list(members)] += ring_allreduce_bytes(len(members), plan.total_length, element_size)
        out[members[0]] += (len(members) - 1) * model
        out[list(members[1:])] += model
    if round_plan is not None:
        _, nbytes = segment_traffic(plan, round_plan, element_size)
        out[list(layout.leaders)] += nbytes.sum(axis=1)
    return out


# --- training loop -------------------------------------------------------------

def _optimizer_config(cfg: RunConfig) -> OptimizerConfig:
    return OptimizerConfig(
        base_lr=cfg.lr,
        momentum=cfg.momentum,
        weight_decay=cfg.weight_decay,
        lars_coeff=cfg.optimizer_lars_coeff,
        warmup_epochs=cfg.warmup_epochs,
        comm_interval=cfg.comm_interval,
    )


def setup(cfg: RunConfig) -> tuple[QuadraticTask, SegmentPlan, list[WorkerState]]:
    task = make_quadratic_task(cfg.workers, cfg.dim, cfg.seed, cfg.heterogeneity)
    plan = build_segment_plan(split_dim(cfg.dim, cfg.layers), cfg.segments)
    init = np.random.default_rng([cfg.seed, 1]).normal(size=cfg.dim)
    states = [WorkerState.fresh(r, init) for r in range(cfg.workers)]
    return task, plan, states


def iter_train(cfg: RunConfig) -> Iterator[MetricsRecord]:
    """Yield one record per communication round.

    Raises :class:`DivergedError` carrying the records produced so far.
    """
    for record, _ in simulate(cfg):
        yield record


def simulate(cfg: RunConfig) -> Iterator[tuple[MetricsRecord, list[WorkerState]]]:
    """Like :func:`iter_train` but also yields the worker states after each round."""
    task, plan, states = setup(cfg)
    opt = _optimizer_config(cfg)
    link = LinkModel(cfg.latency, cfg.bandwidth, cfg.element_size)
    layout = build_groups(cfg.workers, cfg.group_size) if cfg.method == "hier-crossover" else None
    n = cfg.workers
    model_bytes = plan.total_length * cfg.element_size
    round_time = simulate_round_time(
        cfg.method, model_bytes, plan.num_segments, n, cfg.group_size, link, cfg.topo_overhead
    )
    records: list[MetricsRecord] = []
    sim_time = 0.0
    try:
        for t in range(cfg.rounds):
            epoch = t / cfg.rounds_per_epoch
            grads: list = [None] * n
            states = list(states)  # the previous round's list was handed to the caller
            for _ in range(cfg.comm_interval):
                for i in range(n):
                    g = quadratic_grad(task, i, states[i].params)
                    states[i], flushed = accumulate_and_flush(states[i], g, opt)
                    if flushed is not None:
                        grads[i] = flushed
            states, per_worker = _protocol_round(cfg, states, grads, plan, layout, opt, t, epoch)
            sim_time += round_time
            x = np.stack([s.params for s in states])
            record = MetricsRecord(
                round=t + 1,
                sim_time=sim_time,
                global_loss=task.global_loss(x),
                consensus=consensus_distance(states),
                bytes_max=int(per_worker.max()),
                bytes_min=int(per_worker.min()),
            )
            if not (np.isfinite(record.global_loss) and np.isfinite(record.consensus)):
                raise DivergedError(f"round {t + 1}: loss or consensus is non-finite")
            records.append(record)
            yield record, states
    except DivergedError as exc:
        raise DivergedError(str(exc), records) from exc


def _protocol_round(cfg, states, grads, plan, layout, opt, t, epoch):
    n = len(states)
    elem = cfg.element_size
    model_bytes = plan.total_length * elem
    if cfg.method == "hier-crossover":
        new = hierarchical_round(states, grads, layout, plan, t, cfg.seed, opt, epoch)
        round_plan = leader_round_plan(layout, plan, t, cfg.seed)
        return new, hierarchical_bytes(layout, plan, round_plan, elem)

    stepped = [apply_step(s, g, plan.layers, opt, epoch) for s, g in zip(states, grads)]
    if cfg.method == "crossover":
        round_plan = plan_round(n, plan, t, cfg.seed)
        _, nbytes = segment_traffic(plan, round_plan, elem)
        return crossover_round(stepped, plan, round_plan), nbytes.sum(axis=1)
    if cfg.method == "allreduce":
        return allreduce_average(stepped), ring_allreduce_bytes(n, plan.total_length, elem)
    if cfg.method == "sgp-pushsum":
        return pushsum_states_round(stepped, t), np.full(n, 2 * model_bytes, dtype=np.int64)
    if cfg.method == "ring":
        peers = 1 if n == 2 else 2
        return ring_round(stepped), np.full(n, 2 * peers * model_bytes, dtype=np.int64)
    raise InvalidMethodError(f"unknown method {cfg.method!r}")


def train(cfg: RunConfig) -> list[MetricsRecord]:
    return list(iter_train(cfg))


def total_time(records: Sequence[MetricsRecord]) -> float:
    return records[-1].sim_time if records else 0.0
