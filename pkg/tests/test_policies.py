import itertools
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from jsqd.occupancy import ContractViolation, OccupancyState, rank_queue_len
from jsqd.policies import (
    DISCARD,
    ConfigError,
    Kind,
    PolicySpec,
    decide_batch_jsq_d,
    decide_cjsq_uniform,
    decide_jsq,
    decide_jsq_d,
    decide_jsq_d_cdf,
    decide_jsq_nd,
    decide_mjsq,
    decide_pi_c,
    evaluate_rule,
    lowest_rank_with_length,
    pi_c_fallback_needed,
)

from oracles import all_states, jsq_d_law_enumerated

S421 = OccupancyState(4, 3, (4, 2, 1))


def test_jsq():
    assert decide_jsq(S421) == 1
    assert rank_queue_len(S421, decide_jsq(S421)) == 1
    assert decide_jsq(OccupancyState(1, 1, (0,))) == 1


def test_jsq_d():
    s = OccupancyState.empty(10, 2)
    assert decide_jsq_d(s, 3, [7, 3, 9]) == 3
    assert decide_jsq_d(s, 10, list(range(10, 0, -1))) == 1
    r = decide_jsq_d(S421, 2, [4, 4])
    assert r == 4 and rank_queue_len(S421, r) == 3
    with pytest.raises(ContractViolation):
        decide_jsq_d(s, 1, [])


def test_jsq_d_cdf_examples():
    assert decide_jsq_d_cdf(S421, 2, 0.5) == 1
    assert decide_jsq_d_cdf(S421, 2, 0.2) == 2
    assert decide_jsq_d_cdf(S421, 2, 0.01) == 3
    assert decide_jsq_d_cdf(OccupancyState(4, 2, (3, 1)), 2, (3 / 4) ** 2) == 0
    assert lowest_rank_with_length(S421, 2) == 3
    assert lowest_rank_with_length(S421, 0) == 1


def test_mjsq_and_cjsq():
    assert decide_mjsq(S421, 0) == 1
    assert decide_mjsq(OccupancyState.empty(10, 2), 3) == 4
    assert decide_mjsq(OccupancyState.empty(10, 2), 9) == 10
    with pytest.raises(ContractViolation):
        decide_mjsq(OccupancyState.empty(10, 2), 10)
    s = OccupancyState.empty(10, 2)
    assert decide_cjsq_uniform(s, 0, 0.73) == 1
    assert decide_cjsq_uniform(s, 4, 0.5) == 3
    assert decide_cjsq_uniform(s, 4, 1 - 1e-12) == 5


def test_jsq_nd_examples():
    s = OccupancyState.empty(10, 2)
    assert decide_jsq_nd(s, 5, 2, [3, 9], 0.3) == 3
    assert decide_jsq_nd(s, 2, 2, [7, 9], 0.9) == 3
    for ranks in ([7, 9], [10, 10], [1, 4]):
        assert decide_jsq_nd(s, 9, 2, ranks, 0.5) == decide_jsq_d(s, 2, ranks)


def test_pi_c_examples():
    s = OccupancyState(100, 2, (100, 30))
    assert decide_pi_c(s, 0.0, 3, 0.999999) == lowest_rank_with_length(s, 1)
    assert decide_pi_c(s, 100.0, 3, 0.0) == DISCARD
    assert decide_pi_c(s, 10.0, 2, 0.80) == 1
    assert decide_pi_c(s, 10.0, 2, 0.82) == DISCARD
    assert rank_queue_len(s, decide_pi_c(s, 10.0, 2, 0.5)) == 1
    full = OccupancyState(100, 2, (100, 100))
    assert pi_c_fallback_needed(full)
    assert decide_pi_c(full, 0.0, 1, 0.5) == 1  # lowest busy rank


def test_batch_examples():
    s = OccupancyState.empty(10, 2)
    assert decide_batch_jsq_d(s, 2, 4, [9, 2, 5, 7]) == [2, 5]
    assert decide_batch_jsq_d(s, 1, 3, [9, 2, 5]) == [decide_jsq_d(s, 3, [9, 2, 5])]
    assert decide_batch_jsq_d(s, 10, 10, list(range(10, 0, -1))) == list(range(1, 11))
    with pytest.raises(ConfigError):
        decide_batch_jsq_d(s, 3, 2, [1, 2])


def test_policy_spec_validation():
    PolicySpec(Kind.JSQ_D, d=5).validate(10, 3)
    with pytest.raises(ConfigError):
        PolicySpec(Kind.JSQ_D, d=0).validate(10)
    with pytest.raises(ConfigError):
        PolicySpec(Kind.JSQ_D, d=11, with_replacement=False).validate(10)
    with pytest.raises(ConfigError):
        PolicySpec(Kind.MJSQ, n=10).validate(10)
    with pytest.raises(ConfigError):
        PolicySpec(Kind.BATCH_JSQ_D, d=2, ell=3, with_replacement=False).validate(10)
    with pytest.raises(ConfigError):
        PolicySpec(Kind.JSQ_D, d=2, cdf_layout="idle_middle").validate(10, 3)
    with pytest.raises(ValueError):
        PolicySpec("NOPE")
    assert PolicySpec("JSQ_D", d=3).label == "JSQ(d=3)"


@pytest.mark.parametrize("rule,N,want", [
    ("pow:0.7", 100, 26), ("pow:0.5", 100, 10), ("const:5", 7, 5), (12, 3, 12), ("N", 9, 9),
    ("sqrtlog", 100, 47), ("logdiv:2", 100, 24), ("frac:0.9", 50, 45), ("hw:1", 6400, 6320),
    ("sqrt:2", 100, 20), ("logdiv:pow:0.1", 100, 30),
])
def test_evaluate_rule(rule, N, want):
    assert evaluate_rule(rule, N) == want


@pytest.mark.parametrize("rule", ["pow:x", "bogus", "logdiv:0", None, True, "const:"])
def test_evaluate_rule_errors(rule):
    with pytest.raises(ConfigError):
        evaluate_rule(rule, 10)


def cdf_law(s, d, layout="tail"):
    """Exact law of decide_jsq_d_cdf: integrate over u by its breakpoints."""
    N = s.N
    cuts = {Fraction(0), Fraction(1)}
    for q in s.Q:
        cuts.add(Fraction(q, N) ** d)
    if layout == "idle_middle":
        t1, t2 = Fraction(s.Q[0], N) ** d, Fraction(s.Q[1], N) ** d
        cuts |= {t1 - t2, 1 - t2}
    cuts = sorted(c for c in cuts if 0 <= c <= 1)
    law = {}
    for lo, hi in zip(cuts, cuts[1:]):
        if hi > lo:
            mid = (lo + hi) / 2
            # Evaluate at a float strictly inside the interval.
            L = decide_jsq_d_cdf(s, d, float(mid), layout)
            law[L] = law.get(L, 0) + (hi - lo)
    return law


@pytest.mark.parametrize("N", range(1, 7))
@pytest.mark.parametrize("b", range(1, 4))
@pytest.mark.parametrize("d", range(1, 4))
def test_enumerated_law_matches_cdf(N, b, d):
    for Q in all_states(N, b):
        s = OccupancyState(N, b, Q)
        enum = jsq_d_law_enumerated(N, Q, d)
        assert {k: v for k, v in enum.items() if v} == {k: v for k, v in cdf_law(s, d).items() if v}
        # Rank-level path: decide_jsq_d on every rank vector gives the same law.
        law = {}
        w = Fraction(1, N ** d)
        for ranks in itertools.product(range(1, N + 1), repeat=d):
            L = rank_queue_len(s, decide_jsq_d(s, d, ranks))
            law[L] = law.get(L, 0) + w
        assert law == enum
        if b == 2:
            assert cdf_law(s, d, "idle_middle") == cdf_law(s, d)


@pytest.mark.parametrize("N", range(1, 7))
@pytest.mark.parametrize("d", range(1, 4))
def test_without_replacement_dominates(N, d):
    if d > N:
        return
    for Q in all_states(N, 3):
        w = jsq_d_law_enumerated(N, Q, d, with_replacement=True)
        wo = jsq_d_law_enumerated(N, Q, d, with_replacement=False)
        for i in range(4):
            tail_w = sum(v for k, v in w.items() if k >= i)
            tail_wo = sum(v for k, v in wo.items() if k >= i)
            assert tail_wo <= tail_w


@given(st.integers(2, 40), st.data())
def test_sloppiness_and_class_membership(N, data):
    n = data.draw(st.integers(0, N - 1))
    d = data.draw(st.integers(1, 5))
    ranks = data.draw(st.lists(st.integers(1, N), min_size=d, max_size=d))
    u = data.draw(st.floats(0, 1, exclude_max=True))
    s = OccupancyState.empty(N, 2)
    assert decide_jsq(s) <= decide_cjsq_uniform(s, n, u) <= decide_mjsq(s, n)
    r = decide_jsq_nd(s, n, d, ranks, u)
    assert r <= max(min(ranks), n + 1)
    if min(ranks) <= n + 1:
        assert r == min(ranks)
    else:
        assert r <= n + 1
