import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from jsqd.occupancy import (
    ContractViolation,
    DiffusionState,
    FluidState,
    OccupancyState,
    apply_arrival_at_rank,
    apply_departure_at_rank,
    diffusion_scale,
    fluid_scale,
    rank_queue_len,
    tail_sum,
)

from oracles import all_states, arrival_oracle, departure_oracle, sorted_lengths


def S(Q, N=4, L=0):
    return OccupancyState(N, len(Q), tuple(Q), L)


@pytest.mark.parametrize("Q,r,want", [((4, 2, 1), 1, 1), ((4, 2, 1), 3, 2), ((0, 0, 0), 4, 0)])
def test_rank_queue_len_examples(Q, r, want):
    assert rank_queue_len(S(Q), r) == want


def test_arrival_examples():
    assert apply_arrival_at_rank(S((4, 2, 1)), 1) == S((4, 3, 1))
    assert apply_arrival_at_rank(S((4, 2, 1)), 4) == S((4, 2, 1), L=1)
    assert apply_arrival_at_rank(OccupancyState(2, 2, (0, 0)), 1) == OccupancyState(2, 2, (1, 0))


def test_departure_examples():
    assert apply_departure_at_rank(S((4, 2, 1)), 4) == S((4, 2, 0))
    assert apply_departure_at_rank(S((4, 2, 1)), 1) == S((3, 2, 1))
    assert apply_departure_at_rank(S((0, 0, 0)), 2) == S((0, 0, 0))


def test_tail_sum_examples():
    assert tail_sum(S((4, 2, 1)), 2) == 3
    assert tail_sum(S((4, 2, 1), L=5), 1) == 12
    assert tail_sum(S((0, 0, 0)), 3) == 0
    assert tail_sum(S((4, 2, 1), L=5), 4) == 5


def test_fluid_scale_examples():
    np.testing.assert_allclose(fluid_scale(S((4, 2, 1))).q, [1.0, 0.5, 0.25])
    np.testing.assert_allclose(fluid_scale(OccupancyState(10, 3, (10, 10, 7))).q, [1.0, 1.0, 0.7])
    np.testing.assert_allclose(fluid_scale(OccupancyState(1, 1, (0,))).q, [0.0])


def test_diffusion_scale_examples():
    np.testing.assert_allclose(diffusion_scale(OccupancyState(100, 3, (90, 5, 0)), 2).Qbar, [-1.0, 0.5])
    np.testing.assert_allclose(diffusion_scale(OccupancyState(100, 3, (100, 0, 0)), 2).Qbar, [0.0, 0.0])
    d = diffusion_scale(S((4, 2, 1)), 3)
    np.testing.assert_allclose(d.Qbar, [0.0, 1.0, 0.5])
    assert d.U1 == 0.0


def test_contracts():
    with pytest.raises(ContractViolation):
        S((2, 3, 0))
    with pytest.raises(ContractViolation):
        S((5, 0, 0))
    for r in (0, 5):
        with pytest.raises(ContractViolation):
            rank_queue_len(S((4, 2, 1)), r)
    with pytest.raises(ContractViolation):
        FluidState([0.2, 0.5])
    with pytest.raises(ContractViolation):
        DiffusionState(np.array([0.1, 0.0]))
    with pytest.raises(ContractViolation):
        diffusion_scale(S((4, 2, 1)), 4)


def test_constructors():
    s = OccupancyState.from_queue_lengths([3, 0, 1, 1], b=3)
    assert s == S((3, 1, 1))
    assert s.queue_lengths() == [0, 1, 1, 3]
    assert s.total_tasks == 5
    assert OccupancyState.all_busy(5, 2).Q == (5, 0)


@pytest.mark.parametrize("N", range(1, 7))
@pytest.mark.parametrize("b", range(1, 4))
def test_updates_match_sorted_list_oracle(N, b):
    for Q in all_states(N, b):
        s = OccupancyState(N, b, Q)
        assert s.queue_lengths() == sorted_lengths(N, Q)
        for r in range(1, N + 1):
            assert rank_queue_len(s, r) == sorted_lengths(N, Q)[r - 1]
            newQ, overflow = arrival_oracle(N, Q, r, b)
            after = apply_arrival_at_rank(s, r)
            assert after.Q == newQ and after.L == overflow
            assert apply_departure_at_rank(s, r).Q == departure_oracle(N, Q, r, b)


@st.composite
def states(draw, max_N=30, max_b=6):
    b = draw(st.integers(1, max_b))
    lengths = draw(st.lists(st.integers(0, b), min_size=1, max_size=max_N))
    L = draw(st.integers(0, 5))
    return OccupancyState.from_queue_lengths(lengths, b, L)


@given(states(), st.data())
def test_rank_len_monotone_and_task_accounting(s, data):
    lens = s.queue_lengths()
    assert all(a <= b for a, b in zip(lens, lens[1:]))
    r = data.draw(st.integers(1, s.N))
    a = apply_arrival_at_rank(s, r)
    if rank_queue_len(s, r) == s.b:
        assert a.total_tasks == s.total_tasks and a.L == s.L + 1
    else:
        assert a.total_tasks == s.total_tasks + 1 and a.L == s.L
    d = apply_departure_at_rank(s, r)
    assert d.total_tasks == s.total_tasks - (rank_queue_len(s, r) > 0)
    assert d.L == s.L


@given(states(), st.data())
def test_equal_length_ranks_are_interchangeable(s, data):
    r1 = data.draw(st.integers(1, s.N))
    r2 = data.draw(st.integers(1, s.N))
    if rank_queue_len(s, r1) == rank_queue_len(s, r2):
        assert apply_arrival_at_rank(s, r1) == apply_arrival_at_rank(s, r2)
        assert apply_departure_at_rank(s, r1) == apply_departure_at_rank(s, r2)


@given(states())
def test_tail_sum_differences(s):
    for m in range(1, s.b + 1):
        assert tail_sum(s, m) - tail_sum(s, m + 1) == s.Q[m - 1]


@given(states())
def test_scalings_consistent(s):
    q = fluid_scale(s).q
    assert np.all(np.diff(q) <= 0) and q[0] <= 1
    k = min(2, s.b)
    qb = diffusion_scale(s, k).Qbar
    assert math.isclose(qb[0], (q[0] - 1) * math.sqrt(s.N), abs_tol=1e-12)
