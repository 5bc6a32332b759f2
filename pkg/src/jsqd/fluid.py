"""Fluid limit of JSQ(d(N)) with d(N) -> infinity.

The limit solves ``dq_i/dt = lam * p_{i-1}(q) - (q_i - q_{i+1})`` where
``p_j(q)`` is the fraction of arrivals joining servers of length exactly
``j``. The right-hand side is discontinuous on ``{q_i = 1}``, so ``m(q)`` uses
a hard tolerance when testing ``q_i < 1``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

TAU_ONE = 1e-9
DEFAULT_STEP = 1e-3
PROJECTION_WARN = 1e-6


def m_of_q(q, tau: float = TAU_ONE) -> int:
    """``min{i >= 0 : q[i+1] < 1}`` with ``q[b+1] = 0``."""
    q = np.asarray(q, dtype=float)
    for i, x in enumerate(q):
        if x < 1.0 - tau:
            return i
    return q.shape[0]


def p_coeffs(q, lam: float, tau: float = TAU_ONE) -> np.ndarray:
    """Assignment fractions ``p[0..b-1]`` (``p[j]``: arrivals joining length ``j``)."""
    q = np.asarray(q, dtype=float)
    b = q.shape[0]
    p = np.zeros(b)
    m = m_of_q(q, tau)
    if m == 0:
        p[0] = 1.0
        return p
    q_next = q[m] if m < b else 0.0
    low = min((1.0 - q_next) / lam, 1.0)
    if m == b:
        if low < 1.0:
            raise ValueError("p undefined: every level full and lam > 1 - q_{b+1}; need lam < 1")
        p[b - 1] = 1.0
        return p
    p[m - 1] = low
    p[m] = 1.0 - low
    return p


def fluid_rhs(q, lam: float, tau: float = TAU_ONE) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    p = p_coeffs(q, lam, tau)
    q_up = np.append(q[1:], 0.0)
    return lam * p - (q - q_up)


def fixed_point(lam: float, b: int) -> np.ndarray:
    """``(lam, 0, ..., 0)``: the unique equilibrium for ``0 < lam < 1``."""
    if not 0 < lam < 1:
        raise ValueError(f"fixed point requires 0 < lam < 1, got {lam}")
    q = np.zeros(b)
    q[0] = lam
    return q


def project_to_S(q) -> tuple[np.ndarray, float]:
    """Clamp to [0, 1] and enforce monotone tails; returns (q, l1 change)."""
    q = np.asarray(q, dtype=float)
    out = np.minimum.accumulate(np.clip(q, 0.0, 1.0))
    return out, float(np.abs(out - q).sum())


@dataclass
class FluidTrajectory:
    times: np.ndarray
    q: np.ndarray
    projection: float
    step: float
    warnings: list = field(default_factory=list)

    def at(self, t: float) -> np.ndarray:
        k = int(round(t / self.step))
        return self.q[min(k, len(self.times) - 1)]

    def on_grid(self, grid) -> np.ndarray:
        idx = np.clip(np.rint(np.asarray(grid) / self.step).astype(int), 0, len(self.times) - 1)
        return self.q[idx]


def integrate_fluid(q0, lam: float, T: float, h: float = DEFAULT_STEP, tau: float = TAU_ONE) -> FluidTrajectory:
    """Fixed-step RK4, recomputing ``m(q)`` and ``p(q)`` at every stage.

    Each accepted step is projected back onto S; the summed l1 size of those
    corrections is reported as ``projection``.
    """
    if not h > 0:
        raise ValueError("step must be positive")
    q = np.asarray(q0, dtype=float).copy()
    n = int(math.ceil(T / h - 1e-9))
    times = np.arange(n + 1) * h
    out = np.empty((n + 1, q.shape[0]))
    out[0] = q
    total_proj = 0.0
    f = lambda x: fluid_rhs(x, lam, tau)
    for k in range(n):
        k1 = f(q)
        k2 = f(q + 0.5 * h * k1)
        k3 = f(q + 0.5 * h * k2)
        k4 = f(q + h * k3)
        q, proj = project_to_S(q + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4))
        total_proj += proj
        out[k + 1] = q
    notes = []
    if total_proj > PROJECTION_WARN:
        notes.append(f"projection magnitude {total_proj:.3g} exceeds {PROJECTION_WARN:g}; reduce the step")
        warnings.warn(notes[-1], RuntimeWarning, stacklevel=2)
    return FluidTrajectory(times, out, total_proj, h, notes)


def batch_fluid_closed_form(q1_0: float, lam: float, t, b: int = 1) -> np.ndarray:
    """Batch-arrival fluid path: ``q_1 = lam + (q1_0 - lam) e^{-t}``, higher levels 0.

    ``t`` may be a scalar or an array; the result has shape ``t.shape + (b,)``.
    """
    if not 0 <= q1_0 <= lam:
        raise ValueError("closed form needs 0 <= q1(0) <= lam")
    t = np.asarray(t, dtype=float)
    out = np.zeros(t.shape + (b,))
    out[..., 0] = lam + (q1_0 - lam) * np.exp(-t)
    return out
