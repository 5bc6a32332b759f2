import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from jsqd.diffusion import (
    DiffusionParams,
    complementarity_audit,
    linear_ode_solution,
    sde_step,
    simulate_sde,
)
from jsqd.occupancy import DiffusionState


def test_step_examples():
    p = DiffusionParams(beta=1.0, k=2, h=1e-3)
    s = sde_step(DiffusionState(np.array([-1.0, 0.0])), p, 0.0)
    np.testing.assert_allclose(s.Qbar, [-1.0, 0.0], atol=1e-15)
    assert s.U1 == 0

    s = sde_step(DiffusionState(np.array([0.0, 0.2])), p, 0.5)
    overshoot = math.sqrt(2) * 0.5 - 1e-3 + 0.2e-3
    assert s.Qbar[0] == 0.0
    assert s.U1 == pytest.approx(overshoot)
    assert s.Qbar[1] == pytest.approx(0.2 + overshoot - 0.2e-3)

    p0 = DiffusionParams(beta=0.0, k=3, h=1e-2)
    s = sde_step(DiffusionState(np.zeros(3)), p0, 0.0)
    np.testing.assert_array_equal(s.Qbar, 0.0)


def test_params_contract():
    for kw in (dict(beta=-1.0), dict(beta=1.0, k=1), dict(beta=1.0, h=0.0)):
        with pytest.raises(ValueError):
            DiffusionParams(**kw)


def test_determinism():
    p = DiffusionParams(beta=1.0, T=1.0, seed=7)
    a, b = simulate_sde(p, 50), simulate_sde(p, 50)
    np.testing.assert_array_equal(a.X, b.X)
    c = simulate_sde(DiffusionParams(beta=1.0, T=1.0, seed=8), 50)
    assert not np.array_equal(a.X, c.X)


def test_large_beta():
    s = simulate_sde(DiffusionParams(beta=10.0, T=5.0, seed=1), 200)
    assert np.median(s.X[:, 0]) < -8
    assert np.median(s.X[:, 1]) < 0.05


def test_zero_noise_matches_linear_ode():
    h = 1e-3
    p = DiffusionParams(beta=1.0, k=2, T=5.0, h=h)
    s = simulate_sde(p, 1, x0=[-1.0, 1.0], noise=False, record_paths=True)
    x, y = linear_ode_solution(1.0, -1.0, 1.0, s.times)
    assert np.all(x <= 0)  # never reaches the boundary, so reflection is idle
    assert np.abs(s.paths[:, 0, 0] - x).max() <= 10 * h
    assert np.abs(s.paths[:, 0, 1] - y).max() <= 10 * h
    assert s.U[0] == 0.0


def test_step_halving():
    errs = []
    for h in (4e-3, 2e-3, 1e-3):
        s = simulate_sde(DiffusionParams(beta=1.0, k=2, T=5.0, h=h), 1, x0=[-1.0, 1.0], noise=False, record_paths=True)
        x, y = linear_ode_solution(1.0, -1.0, 1.0, s.times)
        errs.append(max(np.abs(s.paths[:, 0, 0] - x).max(), np.abs(s.paths[:, 0, 1] - y).max()))
    assert errs[0] / errs[1] >= 1.8 and errs[1] / errs[2] >= 1.8


def test_audit_and_invariants():
    s = simulate_sde(DiffusionParams(beta=0.5, k=4, T=2.0, seed=3), 100, record_paths=True)
    assert complementarity_audit(s.dU, s.X1_after).ok
    assert np.all(s.paths[:, :, 0] <= 0)
    assert np.all(np.diff(np.cumsum(s.dU, axis=0), axis=0) >= 0)
    assert np.all(s.paths[:, :, 2:] == 0)
    assert np.all(s.dU >= 0)
    np.testing.assert_allclose(s.dU.sum(axis=0), s.U)


def test_audit_negative_control():
    bad = complementarity_audit([[0.0], [0.3]], [[-0.2], [-0.5]])
    assert not bad.ok and bad.step == 1
    assert not complementarity_audit([0.1], [0.2]).ok
    assert complementarity_audit([0.0, 0.2], [-0.4, 0.0]).ok


def test_zero_noise_away_from_boundary_has_no_reflection():
    s = simulate_sde(DiffusionParams(beta=2.0, T=3.0), 3, x0=[-0.5, 0.0], noise=False)
    assert np.all(s.U == 0)


@settings(max_examples=50, deadline=None)
@given(st.floats(-3, 0), st.floats(0, 3), st.floats(-0.2, 0.2), st.floats(0, 3))
def test_step_invariants(x1, x2, dw, beta):
    p = DiffusionParams(beta=beta, k=3, h=1e-2)
    s = sde_step(DiffusionState(np.array([x1, x2, 0.0]), 0.4), p, dw)
    assert s.Qbar[0] <= 0 and s.U1 >= 0.4
    assert s.Qbar[2] == 0
    if s.U1 > 0.4:
        assert s.Qbar[0] == 0
