"""Peer-selection topologies.

The load-balanced random topology draws, for every rank in order, one peer
from that rank's row of the roulette table after removing peers that were
already taken. Every worker seeds the same generator, so every worker computes
the same assignment without talking to anyone.

Randomness comes from numpy's Philox counter-based generator keyed by a 64-bit
seed; per-(round, segment) keys come from :func:`derive_seed`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidWorldError, TopologyFailureError, UnsupportedTopologyError

MASK64 = (1 << 64) - 1
MAX_RESTARTS = 10_000

# Domain tags keep independent uses of one base seed from sharing topologies.
FLAT_DOMAIN = 0
LEADER_DOMAIN = 0x4C454144  # "LEAD"


@dataclass(frozen=True)
class RouletteMatrix:
    world_size: int
    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        n = self.world_size
        if probs.shape != (n, n):
            raise InvalidWorldError(f"roulette table shape {probs.shape} != ({n}, {n})")
        if np.any(probs < 0) or np.any(np.diag(probs) != 0):
            raise InvalidWorldError("roulette entries must be nonnegative with a zero diagonal")
        if not np.allclose(probs.sum(axis=1), 1.0, rtol=0, atol=1e-12):
            raise InvalidWorldError("every roulette row must sum to 1")
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)


@dataclass(frozen=True)
class DestinationMap:
    """Receiver -> sender assignment for one segment in one round.

    ``sender_of[i]`` is the rank whose segment worker ``i`` receives, i.e. the
    ``receive_from`` of worker ``i``. ``send_to(i)`` inverts the permutation.
    """

    sender_of: tuple[int, ...]

    @property
    def world_size(self) -> int:
        return len(self.sender_of)

    def send_to(self, rank: int) -> int:
        return self.sender_of.index(rank)

    def receivers(self) -> tuple[int, ...]:
        inv = [0] * len(self.sender_of)
        for receiver, sender in enumerate(self.sender_of):
            inv[sender] = receiver
        return tuple(inv)

    def is_derangement(self) -> bool:
        n = len(self.sender_of)
        return sorted(self.sender_of) == list(range(n)) and all(
            s != i for i, s in enumerate(self.sender_of)
        )


def _mix64(z: int) -> int:
    # splitmix64 finaliser
    z = (z + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(base_seed: int, round: int, segment_index: int, domain: int = FLAT_DOMAIN) -> int:
    """Mix (base_seed, round, segment_index, domain) into one 64-bit seed."""
    h = _mix64(base_seed & MASK64)
    for field in (round, segment_index, domain):
        h = _mix64(h ^ _mix64((field & MASK64) ^ 0xD6E8FEB86659FD93))
    return h


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=seed & MASK64))


def init_roulettes(world_size: int) -> RouletteMatrix:
    if world_size < 2:
        raise InvalidWorldError(f"world_size={world_size}: need at least 2 workers to pick a peer")
    probs = np.full((world_size, world_size), 1.0 / (world_size - 1))
    np.fill_diagonal(probs, 0.0)
    return RouletteMatrix(world_size, probs)


def select_destinations(seed: int, world_size: int, roulettes: RouletteMatrix) -> DestinationMap:
    """Draw a load-balanced random topology.

    Ranks pick in order 0..n-1. Rank ``i`` zeroes its own entry and the entries
    of every rank already picked, renormalises its row and spins the wheel.
    When a rank is left with nothing to pick (only possible for the last
    ranks), the partial assignment is thrown away and the draw restarts,
    continuing the same random stream.
    """
    if roulettes.world_size != world_size:
        raise InvalidWorldError(
            f"roulette table is for {roulettes.world_size} workers, not {world_size}"
        )
    if world_size < 2:
        raise InvalidWorldError(f"world_size={world_size}: need at least 2 workers")
    rng = make_rng(seed)
    base = roulettes.probs
    for _ in range(MAX_RESTARTS):
        available = np.ones(world_size, dtype=bool)
        dest_list: list[int] = []
        for i in range(world_size):
            row = np.where(available, base[i], 0.0)
            row[i] = 0.0
            total = row.sum()
            if total <= 0.0:
                break
            cdf = np.cumsum(row / total)
            u = rng.random()
            pick = int(np.searchsorted(cdf, u, side="right"))
            if pick >= world_size or row[pick] == 0.0:
                # u landed in the rounding gap at the top of the cdf
                pick = int(np.flatnonzero(row)[-1])
            dest_list.append(pick)
            available[pick] = False
        else:
            return DestinationMap(tuple(dest_list))
    raise TopologyFailureError(
        f"no load-balanced topology for world_size={world_size} after {MAX_RESTARTS} attempts"
    )


def _log2_exact(world_size: int) -> int:
    if world_size < 2 or world_size & (world_size - 1):
        raise UnsupportedTopologyError(
            f"exponential graph needs a power-of-two world size >= 2, got {world_size}"
        )
    return world_size.bit_length() - 1


def exponential_peer(rank: int, round: int, world_size: int) -> int:
    """Out-neighbour of ``rank`` in the time-varying directed exponential graph."""
    hops = _log2_exact(world_size)
    return (rank + (1 << (round % hops))) % world_size


def ring_neighbors(rank: int, world_size: int) -> tuple[int, int]:
    if world_size < 2:
        raise InvalidWorldError(f"world_size={world_size}: a ring needs at least 2 workers")
    return (rank - 1) % world_size, (rank + 1) % world_size


def is_power_of_two(n: int) -> bool:
    return n >= 1 and n & (n - 1) == 0
