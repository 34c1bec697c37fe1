"""Reference averaging protocols: exact AllReduce, push-sum on the directed
exponential graph, and three-point ring gossip."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .errors import CorruptStateError, InvalidInputError
from .gossip import WorkerState, stack_params
from .topology import exponential_peer, ring_neighbors


@dataclass(frozen=True)
class PushSumPair:
    value: np.ndarray
    weight: float

    def __post_init__(self):
        if not self.weight > 0:
            raise CorruptStateError(f"push-sum weight must be positive, got {self.weight}")

    @property
    def estimate(self) -> np.ndarray:
        return self.value / self.weight


def allreduce_average(states: Sequence[WorkerState]) -> list[WorkerState]:
    x = stack_params(states)
    mean = x.mean(axis=0)
    return [replace(s, params=mean.copy()) for s in states]


def pushsum_round(pairs: Sequence[PushSumPair], round: int) -> list[PushSumPair]:
    """Each worker keeps half its mass and pushes the other half to one peer."""
    n = len(pairs)
    if n == 0:
        raise InvalidInputError("need at least one worker")
    values = np.stack([p.value for p in pairs]) / 2
    weights = np.array([p.weight for p in pairs], dtype=np.float64) / 2
    new_values = values.copy()
    new_weights = weights.copy()
    for i in range(n):
        peer = exponential_peer(i, round, n)
        new_values[peer] += values[i]
        new_weights[peer] += weights[i]
    return [PushSumPair(new_values[i], float(new_weights[i])) for i in range(n)]


def ring_round(states: Sequence[WorkerState]) -> list[WorkerState]:
    x = stack_params(states)
    n = len(states)
    out = np.empty_like(x)
    for i in range(n):
        left, right = ring_neighbors(i, n)
        out[i] = (x[left] + x[i] + x[right]) / 3
    return [replace(s, params=out[i]) for i, s in enumerate(states)]


def pushsum_states_round(states: Sequence[WorkerState], round: int) -> list[WorkerState]:
    """Push-sum over worker states whose ``params`` hold de-biased estimates."""
    pairs = [PushSumPair(s.params * s.pushsum_weight, s.pushsum_weight) for s in states]
    mixed = pushsum_round(pairs, round)
    return [
        replace(s, params=p.estimate, pushsum_weight=p.weight) for s, p in zip(states, mixed)
    ]
