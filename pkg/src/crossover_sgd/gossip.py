"""One Crossover-SGD communication round.

For every segment each worker receives that segment from the peer chosen by
the segment's own random topology and replaces its copy with the pairwise
average. All merges read the pre-round snapshot, which is what the
send-everything-then-wait structure of the real protocol amounts to.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import CorruptStateError, InvalidInputError, InvalidWorldError
from .model_core import SegmentPlan
from .topology import FLAT_DOMAIN, DestinationMap, derive_seed, init_roulettes, select_destinations


@dataclass(frozen=True)
class WorkerState:
    """One simulated worker. Arrays are never mutated in place."""

    rank: int
    params: np.ndarray
    momentum: np.ndarray
    grad_accumulator: np.ndarray
    accum_count: int = 0
    pushsum_weight: float = 1.0

    def __post_init__(self):
        n = self.params.shape[0]
        if self.momentum.shape != (n,) or self.grad_accumulator.shape != (n,):
            raise CorruptStateError(f"worker {self.rank}: vectors do not share one layout")
        if not self.pushsum_weight > 0:
            raise CorruptStateError(f"worker {self.rank}: push-sum weight must be positive")
        if self.accum_count < 0:
            raise CorruptStateError(f"worker {self.rank}: negative accumulation count")

    @classmethod
    def fresh(cls, rank: int, params) -> WorkerState:
        params = np.array(params, dtype=np.float64)
        zeros = np.zeros_like(params)
        return cls(rank, params, zeros, zeros.copy())


@dataclass(frozen=True)
class RoundPlan:
    round: int
    per_segment_maps: tuple[DestinationMap, ...] = field(default_factory=tuple)


def plan_round(
    world_size: int,
    plan: SegmentPlan,
    round: int,
    base_seed: int,
    domain: int = FLAT_DOMAIN,
) -> RoundPlan:
    if world_size < 2:
        raise InvalidWorldError(f"world_size={world_size}: gossip needs at least 2 workers")
    roulettes = init_roulettes(world_size)
    maps = tuple(
        select_destinations(derive_seed(base_seed, round, k, domain), world_size, roulettes)
        for k in range(plan.num_segments)
    )
    return RoundPlan(round, maps)


def stack_params(states: Sequence[WorkerState], length: int | None = None) -> np.ndarray:
    if not states:
        raise InvalidInputError("need at least one worker")
    length = states[0].params.shape[0] if length is None else length
    for s in states:
        if s.params.shape != (length,):
            raise CorruptStateError(
                f"worker {s.rank} has {s.params.shape[0]} parameters, expected {length}"
            )
    return np.stack([s.params for s in states])


def crossover_round(
    states: Sequence[WorkerState], plan: SegmentPlan, round_plan: RoundPlan
) -> list[WorkerState]:
    """Average every segment with the peer assigned to it; returns new states."""
    x = stack_params(states, plan.total_length)
    if len(round_plan.per_segment_maps) != plan.num_segments:
        raise CorruptStateError(
            f"round plan has {len(round_plan.per_segment_maps)} maps for {plan.num_segments} segments"
        )
    out = x.copy()
    for k, dmap in enumerate(round_plan.per_segment_maps):
        if dmap.world_size != len(states):
            raise CorruptStateError(f"destination map for segment {k} is for {dmap.world_size} workers")
        sl = plan.segment_slice(k)
        received = x[list(dmap.sender_of), sl]
        out[:, sl] = (x[:, sl] + received) / 2
    return [replace(s, params=out[i]) for i, s in enumerate(states)]


def consensus_distance(states: Sequence[WorkerState]) -> float:
    """Root-mean-square distance of worker parameters from their mean."""
    x = stack_params(states)
    # shift by worker 0 first so identical workers give exactly zero
    shifted = x - x[0]
    dev = shifted - shifted.mean(axis=0)
    return float(np.sqrt(np.mean(np.sum(dev * dev, axis=1))))


def segment_traffic(plan: SegmentPlan, round_plan: RoundPlan, element_size: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-worker (messages, bytes) sent and received in one round.

    Returns two ``(world_size, 2)`` arrays whose columns are (sent, received).
    """
    n = round_plan.per_segment_maps[0].world_size
    messages = np.zeros((n, 2), dtype=np.int64)
    nbytes = np.zeros((n, 2), dtype=np.int64)
    for k, dmap in enumerate(round_plan.per_segment_maps):
        seg_bytes = plan.segment_length(k) * element_size
        for receiver, sender in enumerate(dmap.sender_of):
            messages[sender, 0] += 1
            messages[receiver, 1] += 1
            nbytes[sender, 0] += seg_bytes
            nbytes[receiver, 1] += seg_bytes
    return messages, nbytes
