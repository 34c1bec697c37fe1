import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crossover_sgd.errors import CorruptStateError, InvalidInputError
from crossover_sgd.gossip import (
    RoundPlan,
    WorkerState,
    consensus_distance,
    crossover_round,
    plan_round,
    segment_traffic,
)
from crossover_sgd.model_core import build_segment_plan, flatten_tensors, layer_shapes, unflatten_tensors
from crossover_sgd.topology import DestinationMap


def make_states(x):
    return [WorkerState.fresh(i, row) for i, row in enumerate(np.atleast_2d(x))]


def params(states):
    return np.stack([s.params for s in states])


def message_passing_oracle(x, plan, round_plan):
    """Per-worker send/recv of flattened segments, then layer-wise merge."""
    n = x.shape[0]
    inbox = {}
    for k, dmap in enumerate(round_plan.per_segment_maps):
        for me in range(n):
            inbox[(dmap.send_to(me), k)] = flatten_tensors(x[me], plan, k)
    out = x.copy()
    for me in range(n):
        for k in range(plan.num_segments):
            received_layers = unflatten_tensors(inbox[(me, k)], plan)
            for layer, received in zip(plan.segments[k], received_layers):
                sl = plan.layer_slice(layer)
                out[me, sl] = (x[me, sl] + received) / 2
    return out


def test_two_workers_average():
    plan = build_segment_plan(layer_shapes([1]), 1)
    states = make_states([[0.0], [2.0]])
    out = crossover_round(states, plan, plan_round(2, plan, 0, 0))
    np.testing.assert_array_equal(params(out), [[1.0], [1.0]])


def test_consensus_is_fixed_point():
    plan = build_segment_plan(layer_shapes([2, 3]), 2)
    x = np.tile([1.5, -2.0, 0.25, 3.0, 7.0], (3, 1))
    out = crossover_round(make_states(x), plan, plan_round(3, plan, 4, 11))
    np.testing.assert_array_equal(params(out), x)


def test_momentum_and_accumulator_untouched():
    plan = build_segment_plan(layer_shapes([2]), 1)
    s = WorkerState(0, np.array([1.0, 2.0]), np.array([3.0, 4.0]), np.array([5.0, 6.0]), 2, 1.0)
    t = WorkerState(1, np.array([0.0, 0.0]), np.zeros(2), np.zeros(2))
    out = crossover_round([s, t], plan, plan_round(2, plan, 0, 0))
    np.testing.assert_array_equal(out[0].momentum, [3.0, 4.0])
    np.testing.assert_array_equal(out[0].grad_accumulator, [5.0, 6.0])
    assert out[0].accum_count == 2


@pytest.mark.parametrize("n,lengths,k", [(4, [3, 1, 4, 1, 5], 3), (7, [2, 2, 2, 2], 4), (16, [9], 1)])
def test_matches_message_passing_oracle(n, lengths, k):
    rng = np.random.default_rng(n)
    plan = build_segment_plan(layer_shapes(lengths), k)
    x = rng.normal(size=(n, plan.total_length))
    rp = plan_round(n, plan, 3, 42)
    out = crossover_round(make_states(x), plan, rp)
    np.testing.assert_allclose(params(out), message_passing_oracle(x, plan, rp), rtol=0, atol=0)


def test_mean_preserved_four_workers():
    rng = np.random.default_rng(0)
    plan = build_segment_plan(layer_shapes([4, 4, 4, 4]), 4)
    x = rng.normal(size=(4, 16))
    out = params(crossover_round(make_states(x), plan, plan_round(4, plan, 0, 5)))
    before = x.sum(axis=0) / 4
    after = out.sum(axis=0) / 4
    assert np.all(np.abs(after - before) <= 1e-12 * np.maximum(1.0, np.abs(before)))


@settings(max_examples=100, deadline=None)
@given(
    n=st.integers(2, 20),
    k=st.integers(1, 4),
    seed=st.integers(0, 2**32 - 1),
    rnd=st.integers(0, 1000),
)
def test_round_preserves_mean_and_never_increases_consensus(n, k, seed, rnd):
    rng = np.random.default_rng(seed)
    plan = build_segment_plan(layer_shapes([3] * 4), k)
    x = rng.normal(size=(n, plan.total_length)) * rng.uniform(0.1, 100)
    states = make_states(x)
    out = crossover_round(states, plan, plan_round(n, plan, rnd, seed))
    scale = np.abs(x).max()
    np.testing.assert_allclose(params(out).mean(axis=0), x.mean(axis=0), rtol=0, atol=1e-10 * scale)
    assert consensus_distance(out) <= consensus_distance(states) * (1 + 1e-12)


def test_snapshot_semantics_under_relabelling():
    # Relabel worker r as perm[r]; the round must commute with the relabelling.
    rng = np.random.default_rng(3)
    n = 6
    plan = build_segment_plan(layer_shapes([2, 2, 2]), 3)
    x = rng.normal(size=(n, 6))
    rp = plan_round(n, plan, 0, 9)
    perm = rng.permutation(n)
    inv = np.argsort(perm)
    x_rel = x[inv]  # row perm[r] holds worker r
    maps_rel = tuple(
        DestinationMap(tuple(int(perm[d.sender_of[inv[i]]]) for i in range(n))) for d in rp.per_segment_maps
    )
    out = params(crossover_round(make_states(x), plan, rp))
    out_rel = params(crossover_round(make_states(x_rel), plan, RoundPlan(0, maps_rel)))
    np.testing.assert_array_equal(out_rel, out[inv])


def test_plan_round_is_deterministic():
    plan = build_segment_plan(layer_shapes([1] * 6), 3)
    assert plan_round(10, plan, 5, 123) == plan_round(10, plan, 5, 123)
    assert len(plan_round(10, plan, 5, 123).per_segment_maps) == 3


def test_plan_round_single_segment():
    plan = build_segment_plan(layer_shapes([4, 4]), 1)
    assert len(plan_round(5, plan, 0, 0).per_segment_maps) == 1


def test_plan_round_segments_use_distinct_seeds():
    plan = build_segment_plan(layer_shapes([1] * 4), 4)
    maps = plan_round(2, plan, 0, 0).per_segment_maps
    assert all(m.sender_of == (1, 0) for m in maps)
    big = plan_round(32, plan, 0, 0).per_segment_maps
    assert len({m.sender_of for m in big}) == 4


def test_layout_mismatch():
    plan = build_segment_plan(layer_shapes([2]), 1)
    states = [WorkerState.fresh(0, [1.0, 2.0]), WorkerState.fresh(1, [1.0, 2.0, 3.0])]
    with pytest.raises(CorruptStateError):
        crossover_round(states, plan, plan_round(2, plan, 0, 0))


def test_worker_state_invariants():
    with pytest.raises(CorruptStateError):
        WorkerState(0, np.zeros(2), np.zeros(3), np.zeros(2))
    with pytest.raises(CorruptStateError):
        WorkerState(0, np.zeros(2), np.zeros(2), np.zeros(2), pushsum_weight=0.0)


def test_consensus_distance_examples():
    assert consensus_distance(make_states([[0.0], [2.0]])) == 1.0
    assert consensus_distance(make_states(np.ones((5, 3)))) == 0.0
    with pytest.raises(InvalidInputError):
        consensus_distance([])


def test_consensus_distance_double_loop_oracle():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(7, 5))
    n, d = x.shape
    total = 0.0
    for i in range(n):
        for j in range(d):
            mean_j = sum(x[k][j] for k in range(n)) / n
            total += (x[i][j] - mean_j) ** 2
    assert abs(consensus_distance(make_states(x)) - (total / n) ** 0.5) <= 1e-12


@pytest.mark.parametrize("n", [2, 3, 5, 8, 31])
def test_segment_traffic_is_balanced(n):
    plan = build_segment_plan(layer_shapes([5, 3, 8, 1]), 3)
    for rnd in range(10):
        messages, nbytes = segment_traffic(plan, plan_round(n, plan, rnd, 1), 8)
        assert np.all(messages == plan.num_segments)
        assert np.all(nbytes == plan.total_length * 8)
