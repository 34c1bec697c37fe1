"""Two-level Crossover-SGD: exact gradient reduction inside each group,
gossip between group leaders, then leaders broadcast to their members."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .errors import CorruptStateError, InvalidGroupError
from .gossip import RoundPlan, WorkerState, crossover_round, plan_round
from .model_core import SegmentPlan
from .optimizer import OptimizerConfig, apply_step
from .topology import FLAT_DOMAIN, LEADER_DOMAIN


@dataclass(frozen=True)
class GroupLayout:
    groups: tuple[tuple[int, ...], ...]

    @property
    def leaders(self) -> tuple[int, ...]:
        return tuple(g[0] for g in self.groups)

    @property
    def world_size(self) -> int:
        return sum(len(g) for g in self.groups)

    def leader_of(self, group: int) -> int:
        return self.groups[group][0]


def build_groups(world_size: int, group_size: int) -> GroupLayout:
    """Split ranks into contiguous blocks of at most ``group_size``.

    The number of blocks is ``ceil(world_size / group_size)`` and block sizes
    differ by at most one. The lowest rank of each block leads it.
    """
    if group_size < 1:
        raise InvalidGroupError(f"group_size must be >= 1, got {group_size}")
    if world_size < 1 or group_size > world_size:
        raise InvalidGroupError(f"group_size={group_size} must not exceed world_size={world_size}")
    num_groups = -(-world_size // group_size)
    base, extra = divmod(world_size, num_groups)
    groups, start = [], 0
    for g in range(num_groups):
        size = base + (1 if g < extra else 0)
        groups.append(tuple(range(start, start + size)))
        start += size
    return GroupLayout(tuple(groups))


def leader_round_plan(layout: GroupLayout, plan: SegmentPlan, round: int, base_seed: int) -> Optional[RoundPlan]:
    """Topologies for the leader gossip, or None when there is a single group."""
    leaders = len(layout.groups)
    if leaders < 2:
        return None
    # With one worker per group the leaders are the whole world, so the round
    # must match flat crossover exactly; otherwise draw from leader seeds.
    domain = FLAT_DOMAIN if leaders == layout.world_size else LEADER_DOMAIN
    return plan_round(leaders, plan, round, base_seed, domain)


def hierarchical_round(
    states: Sequence[WorkerState],
    grads: Sequence[np.ndarray],
    layout: GroupLayout,
    plan: SegmentPlan,
    round: int,
    base_seed: int,
    cfg: OptimizerConfig,
    epoch: float = 0.0,
) -> list[WorkerState]:
    if len(states) != layout.world_size or len(grads) != len(states):
        raise CorruptStateError(
            f"{len(states)} states and {len(grads)} gradients for a layout of {layout.world_size} workers"
        )
    out = list(states)

    # 1. leaders reduce their group's gradients and take the optimizer step
    for members in layout.groups:
        reduced = np.mean(np.stack([grads[r] for r in members]), axis=0)
        leader = members[0]
        out[leader] = apply_step(states[leader], reduced, plan.layers, cfg, epoch)

    # 2. crossover among leaders, in a dense leader index space
    leaders = layout.leaders
    round_plan = leader_round_plan(layout, plan, round, base_seed)
    if round_plan is not None:
        mixed = crossover_round([out[r] for r in leaders], plan, round_plan)
        for r, s in zip(leaders, mixed):
            out[r] = s

    # 3. broadcast leader parameters to members
    for members in layout.groups:
        leader_params = out[members[0]].params
        for r in members[1:]:
            out[r] = replace(out[r], params=leader_params.copy())
    return out
