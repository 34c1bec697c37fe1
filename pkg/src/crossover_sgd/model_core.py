"""Layered models as flat vectors, and the segment view used for communication.

A model is a list of layers; its parameters live in one contiguous float64
vector. A :class:`SegmentPlan` groups contiguous layers into segments so that
each segment can be fused into one message (``flatten_tensors``) and split back
into layers on arrival (``unflatten_tensors``).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import CorruptSegmentError, CorruptStateError, InvalidPlanError, InvalidSegmentError


@dataclass(frozen=True)
class LayerShape:
    layer_index: int
    length: int

    def __post_init__(self):
        if self.length < 1:
            raise InvalidPlanError(f"layer {self.layer_index} has length {self.length} < 1")


def layer_shapes(lengths: Sequence[int]) -> tuple[LayerShape, ...]:
    """Build a contiguous, zero-based layer layout from element counts."""
    return tuple(LayerShape(i, int(n)) for i, n in enumerate(lengths))


def split_dim(dim: int, num_layers: int) -> tuple[LayerShape, ...]:
    """Split ``dim`` elements into ``num_layers`` near-equal layers (larger first)."""
    if num_layers < 1 or dim < num_layers:
        raise InvalidPlanError(f"cannot split dim={dim} into {num_layers} nonempty layers")
    base, extra = divmod(dim, num_layers)
    return layer_shapes([base + (1 if i < extra else 0) for i in range(num_layers)])


@dataclass(frozen=True)
class SegmentPlan:
    """Contiguous partition of the model's layers.

    ``segments[k]`` is a ``range`` of layer indices. The plan also keeps the
    layer layout so that element offsets can be computed without extra input.
    """

    segments: tuple[range, ...]
    layers: tuple[LayerShape, ...]

    def __post_init__(self):
        expected = 0
        for seg in self.segments:
            if seg.step != 1 or len(seg) == 0 or seg.start != expected:
                raise InvalidPlanError(f"segments {self.segments} are not a contiguous partition")
            expected = seg.stop
        if expected != len(self.layers):
            raise InvalidPlanError(f"segments cover {expected} of {len(self.layers)} layers")
        offsets = np.concatenate([[0], np.cumsum([l.length for l in self.layers])])
        object.__setattr__(self, "_offsets", offsets.astype(np.int64))

    @property
    def total_layers(self) -> int:
        return len(self.layers)

    @property
    def num_segments(self) -> int:
        return len(self.segments)

    @property
    def total_length(self) -> int:
        return int(self._offsets[-1])

    def layer_slice(self, layer_index: int) -> slice:
        return slice(int(self._offsets[layer_index]), int(self._offsets[layer_index + 1]))

    def segment_slice(self, segment_index: int) -> slice:
        if not 0 <= segment_index < len(self.segments):
            raise InvalidSegmentError(
                f"segment {segment_index} out of range for a {len(self.segments)}-segment plan"
            )
        seg = self.segments[segment_index]
        return slice(int(self._offsets[seg.start]), int(self._offsets[seg.stop]))

    def segment_length(self, segment_index: int) -> int:
        sl = self.segment_slice(segment_index)
        return sl.stop - sl.start

    def segment_lengths(self) -> list[int]:
        return [self.segment_length(k) for k in range(len(self.segments))]


@dataclass(frozen=True)
class ParamVector:
    values: np.ndarray
    layout: tuple[LayerShape, ...]

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        total = sum(l.length for l in self.layout)
        if values.ndim != 1 or values.shape[0] != total:
            raise CorruptStateError(f"vector of shape {values.shape} does not match layout size {total}")
        if not np.all(np.isfinite(values)):
            raise CorruptStateError("parameter vector contains non-finite entries")
        object.__setattr__(self, "values", values)

    @classmethod
    def from_layers(cls, layers: Sequence[Sequence[float]]) -> ParamVector:
        arrays = [np.asarray(v, dtype=np.float64).ravel() for v in layers]
        return cls(np.concatenate(arrays), layer_shapes([a.size for a in arrays]))


@dataclass(frozen=True)
class FlatSegment:
    segment_index: int
    values: np.ndarray


def build_segment_plan(layers: Sequence[LayerShape], num_segments: int) -> SegmentPlan:
    """Partition ``layers`` into ``num_segments`` contiguous, element-balanced segments.

    Uses greedy left-to-right packing at the smallest capacity for which a
    packing into ``num_segments`` nonempty segments exists. That capacity is
    found by bisection, so the result minimises the largest segment.
    """
    layers = tuple(layers)
    if not layers:
        raise InvalidPlanError("cannot segment an empty layer list")
    if [l.layer_index for l in layers] != list(range(len(layers))):
        raise InvalidPlanError("layer indices must be contiguous from 0")
    if not 1 <= num_segments <= len(layers):
        raise InvalidPlanError(
            f"num_segments={num_segments} must lie in [1, {len(layers)}] (number of layers)"
        )
    lengths = [l.length for l in layers]

    lo, hi = max(lengths), sum(lengths)
    while lo < hi:
        mid = (lo + hi) // 2
        if _greedy_count(lengths, mid) <= num_segments:
            hi = mid
        else:
            lo = mid + 1
    return SegmentPlan(_greedy_pack(lengths, lo, num_segments), layers)


def _greedy_count(lengths: list[int], capacity: int) -> int:
    count, current = 1, 0
    for n in lengths:
        if current + n > capacity:
            count += 1
            current = 0
        current += n
    return count


def _greedy_pack(lengths: list[int], capacity: int, num_segments: int) -> tuple[range, ...]:
    # Close a segment early when the remaining layers are just enough to give
    # every remaining segment one layer.
    bounds = []
    start, current = 0, 0
    for i, n in enumerate(lengths):
        remaining_layers = len(lengths) - i
        remaining_segments = num_segments - len(bounds)
        if i > start and (current + n > capacity or remaining_layers < remaining_segments):
            bounds.append(range(start, i))
            start, current = i, 0
        current += n
    bounds.append(range(start, len(lengths)))
    return tuple(bounds)


def _as_values(params: ParamVector | np.ndarray) -> np.ndarray:
    return params.values if isinstance(params, ParamVector) else np.asarray(params, dtype=np.float64)


def flatten_tensors(params: ParamVector | np.ndarray, plan: SegmentPlan, segment_index: int) -> FlatSegment:
    """Fuse the layers of one segment into a single message buffer."""
    values = _as_values(params)
    if values.shape[-1] != plan.total_length:
        raise CorruptStateError(
            f"parameter length {values.shape[-1]} does not match plan length {plan.total_length}"
        )
    sl = plan.segment_slice(segment_index)
    return FlatSegment(segment_index, values[..., sl].copy())


def unflatten_tensors(flat: FlatSegment, plan: SegmentPlan) -> list[np.ndarray]:
    """Split a fused segment back into its member layers, in layer order."""
    seg_slice = plan.segment_slice(flat.segment_index)
    seg = plan.segments[flat.segment_index]
    values = np.asarray(flat.values, dtype=np.float64)
    if values.shape[-1] != seg_slice.stop - seg_slice.start:
        raise CorruptSegmentError(
            f"segment {flat.segment_index} has {values.shape[-1]} elements, "
            f"plan expects {seg_slice.stop - seg_slice.start}"
        )
    base = seg_slice.start
    out = []
    for layer in seg:
        sl = plan.layer_slice(layer)
        out.append(values[..., sl.start - base : sl.stop - base].copy())
    return out
