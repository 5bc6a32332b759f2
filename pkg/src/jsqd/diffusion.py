"""Euler-Maruyama paths of the reflected diffusion limit in the Halfin-Whitt regime.

State ``(X_1, ..., X_k)`` with ``X_1 <= 0`` (scaled idle servers, negated) and
``X_i >= 0`` for ``i >= 2``::

    dX_1 = sqrt(2) dW - beta dt + (X_2 - X_1) dt - dU_1
    dX_2 = dU_1 - (X_2 - X_3) dt
    dX_i = -(X_i - X_{i+1}) dt,   i = 3..k,   X_{k+1} = 0

``U_1`` grows only while ``X_1 = 0``. Reflection is by projection: any
overshoot of ``X_1`` above zero in one step becomes ``dU_1``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .occupancy import DiffusionState


@dataclass(frozen=True)
class DiffusionParams:
    beta: float
    k: int = 2
    T: float = 5.0
    h: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")
        if self.k < 2:
            raise ValueError("need k >= 2")
        if not self.h > 0 or not self.T > 0:
            raise ValueError("need h > 0 and T > 0")

    @property
    def n_steps(self) -> int:
        return int(math.ceil(self.T / self.h - 1e-9))


def _step_arrays(X, U, beta, h, dW):
    """Vectorized step on ``X`` of shape (reps, k); returns (X, U, dU)."""
    X1, X2 = X[:, 0], X[:, 1]
    X3 = X[:, 2] if X.shape[1] > 2 else 0.0
    y = X1 + math.sqrt(2.0) * dW - beta * h + (X2 - X1) * h
    dU = np.maximum(y, 0.0)
    new = np.empty_like(X)
    new[:, 0] = np.minimum(y, 0.0)
    new[:, 1] = X2 + dU - (X2 - X3) * h
    if X.shape[1] > 2:
        nxt = np.concatenate([X[:, 3:], np.zeros((X.shape[0], 1))], axis=1)
        new[:, 2:] = X[:, 2:] - (X[:, 2:] - nxt) * h
    return new, U + dU, dU


def sde_step(s: DiffusionState, params: DiffusionParams, dW: float) -> DiffusionState:
    X, U, _ = _step_arrays(s.Qbar[None, :], np.array([s.U1]), params.beta, params.h, np.array([dW]))
    return DiffusionState(X[0], float(U[0]))


@dataclass
class SDESamples:
    """Terminal samples (``X[rep, i]``) plus optional recorded paths.

    ``paths`` has shape (steps+1, reps, k); ``dU`` and ``X1_after`` have shape
    (steps, reps) and feed :func:`complementarity_audit`.
    """

    X: np.ndarray
    U: np.ndarray
    times: Optional[np.ndarray] = None
    paths: Optional[np.ndarray] = None
    dU: Optional[np.ndarray] = None
    X1_after: Optional[np.ndarray] = None
    sup: Optional[np.ndarray] = None


def simulate_sde(params: DiffusionParams, reps: int = 500, x0=None, noise: bool = True,
                 record_paths: bool = False) -> SDESamples:
    """Simulate ``reps`` independent paths from the point mass ``x0``.

    ``x0`` defaults to the origin (all servers busy, none with a queue).
    ``noise=False`` drops the Brownian term (deterministic check hook).
    ``sup`` holds the running maximum of each coordinate over the path.
    """
    k = params.k
    x0 = np.zeros(k) if x0 is None else np.asarray(x0, dtype=float)
    if x0.shape != (k,) or x0[0] > 0:
        raise ValueError("x0 must have length k with x0[0] <= 0")
    rng = np.random.default_rng(params.seed)
    X = np.tile(x0, (reps, 1))
    U = np.zeros(reps)
    sup = X.copy()
    n = params.n_steps
    sd = math.sqrt(params.h)
    paths = dUs = X1s = None
    if record_paths:
        paths = np.empty((n + 1, reps, k))
        paths[0] = X
        dUs = np.empty((n, reps))
        X1s = np.empty((n, reps))
    for j in range(n):
        dW = rng.normal(0.0, sd, reps) if noise else np.zeros(reps)
        X, U, dU = _step_arrays(X, U, params.beta, params.h, dW)
        np.maximum(sup, X, out=sup)
        if record_paths:
            paths[j + 1] = X
            dUs[j] = dU
            X1s[j] = X[:, 0]
    times = np.arange(n + 1) * params.h if record_paths else None
    return SDESamples(X, U, times, paths, dUs, X1s, sup)


@dataclass(frozen=True)
class AuditResult:
    ok: bool
    step: int = -1
    rep: int = -1
    detail: str = ""


def complementarity_audit(dU, X1_after) -> AuditResult:
    """Reflection may act (``dU > 0``) only at steps ending with ``X_1 = 0``.

    Also rejects ``X_1 > 0`` and negative ``dU``.
    """
    dU = np.atleast_1d(np.asarray(dU, dtype=float))
    X1 = np.atleast_1d(np.asarray(X1_after, dtype=float))
    bad = (dU < 0) | (X1 > 0) | ((dU > 0) & (X1 != 0))
    if not bad.any():
        return AuditResult(True)
    idx = np.argwhere(bad)[0]
    step = int(idx[0])
    rep = int(idx[1]) if idx.shape[0] > 1 else -1
    return AuditResult(False, step, rep, f"dU={dU[tuple(idx)]:.6g} with X1={X1[tuple(idx)]:.6g}")


def linear_ode_solution(beta: float, x0: float, y0: float, t):
    """Unreflected zero-noise k = 2 solution of ``x' = -beta - x + y``, ``y' = -y``."""
    t = np.asarray(t, dtype=float)
    y = y0 * np.exp(-t)
    x = -beta + y0 * t * np.exp(-t) + (x0 + beta) * np.exp(-t)
    return x, y
