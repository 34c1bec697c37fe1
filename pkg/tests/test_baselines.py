import numpy as np
import pytest

from crossover_sgd.baselines import (
    PushSumPair,
    allreduce_average,
    pushsum_round,
    pushsum_states_round,
    ring_round,
)
from crossover_sgd.errors import CorruptStateError, UnsupportedTopologyError
from crossover_sgd.gossip import WorkerState, consensus_distance


def make_states(x):
    return [WorkerState.fresh(i, row) for i, row in enumerate(np.atleast_2d(x))]


def params(states):
    return np.stack([s.params for s in states])


def test_allreduce_two_workers():
    np.testing.assert_array_equal(params(allreduce_average(make_states([[0.0], [2.0]]))), [[1.0], [1.0]])


def test_allreduce_idempotent_on_consensus():
    x = np.tile([0.1, 0.2, 0.3], (4, 1))
    np.testing.assert_array_equal(params(allreduce_average(make_states(x))), x)


def test_allreduce_matches_summation_oracle():
    rng = np.random.default_rng(8)
    x = rng.normal(size=(8, 13))
    out = params(allreduce_average(make_states(x)))
    oracle = [sum(float(x[i, j]) for i in range(8)) / 8 for j in range(13)]
    assert np.all(out == out[0])
    np.testing.assert_allclose(out[0], oracle, rtol=0, atol=1e-12)
    assert consensus_distance(allreduce_average(make_states(x))) == 0.0


def test_allreduce_layout_mismatch():
    with pytest.raises(CorruptStateError):
        allreduce_average([WorkerState.fresh(0, [1.0]), WorkerState.fresh(1, [1.0, 2.0])])


def test_pushsum_two_workers():
    out = pushsum_round([PushSumPair(np.array([0.0]), 1.0), PushSumPair(np.array([2.0]), 1.0)], 0)
    assert [float(p.estimate[0]) for p in out] == [1.0, 1.0]


def test_pushsum_mass_conservation_with_uneven_weights():
    rng = np.random.default_rng(4)
    pairs = [PushSumPair(rng.normal(size=5), float(w)) for w in rng.uniform(0.2, 3.0, size=8)]
    v0 = sum(p.value for p in pairs)
    w0 = sum(p.weight for p in pairs)
    for r in range(20):
        pairs = pushsum_round(pairs, r)
        np.testing.assert_allclose(sum(p.value for p in pairs), v0, rtol=1e-10)
        assert abs(sum(p.weight for p in pairs) - w0) <= 1e-10 * w0


def test_pushsum_converges_to_initial_mean():
    rng = np.random.default_rng(5)
    x = rng.normal(size=(8, 6))
    pairs = [PushSumPair(row, 1.0) for row in x]
    for r in range(30):
        pairs = pushsum_round(pairs, r)
    assert abs(sum(p.weight for p in pairs) - 8) <= 1e-12
    for p in pairs:
        np.testing.assert_allclose(p.estimate, x.mean(axis=0), rtol=0, atol=1e-8)


def test_pushsum_requires_power_of_two():
    with pytest.raises(UnsupportedTopologyError):
        pushsum_round([PushSumPair(np.zeros(1), 1.0)] * 6, 0)


def test_pushsum_pair_weight_positive():
    with pytest.raises(CorruptStateError):
        PushSumPair(np.zeros(1), 0.0)


def test_pushsum_states_round_keeps_debiased_params():
    x = np.array([[0.0], [2.0], [4.0], [6.0]])
    out = pushsum_states_round(make_states(x), 0)
    # offset 1: worker i receives from i-1
    np.testing.assert_array_equal(params(out).ravel(), [3.0, 1.0, 3.0, 5.0])
    assert all(s.pushsum_weight == 1.0 for s in out)


def test_ring_hand_stencil():
    out = params(ring_round(make_states([[0.0], [4.0], [8.0], [4.0]]))).ravel()
    np.testing.assert_allclose(out, [8 / 3, 4.0, 16 / 3, 4.0], rtol=0, atol=1e-15)


def test_ring_consensus_fixed_point():
    x = np.tile([3.0, -1.0], (5, 1))
    np.testing.assert_array_equal(params(ring_round(make_states(x))), x)


@pytest.mark.parametrize("n", [2, 3, 5, 16])
def test_ring_preserves_mean_and_contracts(n):
    rng = np.random.default_rng(n)
    x = rng.normal(size=(n, 4))
    states = make_states(x)
    out = ring_round(states)
    np.testing.assert_allclose(params(out).mean(axis=0), x.mean(axis=0), rtol=0, atol=1e-12)
    assert consensus_distance(out) <= consensus_distance(states)
