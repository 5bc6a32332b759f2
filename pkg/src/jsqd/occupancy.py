"""Occupancy-state representation of N parallel single-server queues.

The system is stored as tail counts ``Q[i]`` (number of servers holding at
least ``i`` tasks, ``i = 1..b``) plus a cumulative overflow counter ``L``.
Servers are only ever addressed by *rank* in nondecreasing queue-length
order, rank 1 being a shortest queue. Equal-length servers are
interchangeable, so no per-server identity is kept.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class ContractViolation(ValueError):
    """Raised when an operation is called outside its precondition."""


@dataclass(frozen=True)
class OccupancyState:
    N: int
    b: int
    Q: tuple[int, ...]
    L: int = 0

    def __post_init__(self):
        Q = tuple(int(x) for x in self.Q)
        object.__setattr__(self, "Q", Q)
        if self.N < 1 or self.b < 1:
            raise ContractViolation(f"need N >= 1 and b >= 1, got N={self.N}, b={self.b}")
        if len(Q) != self.b:
            raise ContractViolation(f"Q has length {len(Q)}, expected b={self.b}")
        prev = self.N
        for i, q in enumerate(Q, start=1):
            if q < 0 or q > prev:
                raise ContractViolation(f"tail counts not monotone at level {i}: {Q} (N={self.N})")
            prev = q
        if self.L < 0:
            raise ContractViolation("overflow count must be nonnegative")

    @classmethod
    def empty(cls, N: int, b: int) -> "OccupancyState":
        return cls(N, b, (0,) * b, 0)

    @classmethod
    def all_busy(cls, N: int, b: int) -> "OccupancyState":
        """Every server holds exactly one task."""
        return cls(N, b, (N,) + (0,) * (b - 1), 0)

    @classmethod
    def from_queue_lengths(cls, lengths, b: int, L: int = 0) -> "OccupancyState":
        lengths = list(lengths)
        if any(x < 0 or x > b for x in lengths):
            raise ContractViolation("queue lengths must lie in 0..b")
        Q = tuple(sum(1 for x in lengths if x >= i) for i in range(1, b + 1))
        return cls(len(lengths), b, Q, L)

    def queue_lengths(self) -> list[int]:
        """Sorted (nondecreasing) per-rank queue lengths."""
        return [rank_queue_len(self, r) for r in range(1, self.N + 1)]

    @property
    def total_tasks(self) -> int:
        return sum(self.Q)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.Q, dtype=np.int64)


@dataclass(frozen=True)
class FluidState:
    q: np.ndarray = field(repr=True)

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        object.__setattr__(self, "q", q)
        if q.ndim != 1:
            raise ContractViolation("fluid state must be a vector")
        if np.any(q < 0) or np.any(q > 1) or np.any(np.diff(q) > 0):
            raise ContractViolation(f"fluid state not in S: {q}")

    @property
    def b(self) -> int:
        return self.q.shape[0]


@dataclass(frozen=True)
class DiffusionState:
    """Centered/scaled state; ``Qbar[0]`` is the (nonpositive) idle-server coordinate."""

    Qbar: np.ndarray
    U1: float = 0.0

    def __post_init__(self):
        Qbar = np.asarray(self.Qbar, dtype=float)
        object.__setattr__(self, "Qbar", Qbar)
        if Qbar.ndim != 1 or Qbar.shape[0] < 1:
            raise ContractViolation("Qbar must be a nonempty vector")
        if Qbar[0] > 0:
            raise ContractViolation("first diffusion coordinate must be <= 0")
        if self.U1 < 0:
            raise ContractViolation("accumulated reflection must be nonnegative")

    @property
    def k(self) -> int:
        return self.Qbar.shape[0]


def _check_rank(s: OccupancyState, r: int):
    if not 1 <= r <= s.N:
        raise ContractViolation(f"rank {r} outside 1..{s.N}")


def rank_queue_len(s: OccupancyState, r: int) -> int:
    """Queue length held by the server of rank ``r``.

    The rank-``r`` server has at least ``i`` tasks iff ``Q[i] >= N - r + 1``,
    so the answer is the largest such ``i`` (``Q[0]`` is taken as ``N``).
    """
    _check_rank(s, r)
    threshold = s.N - r + 1
    i = 0
    for q in s.Q:
        if q < threshold:
            break
        i += 1
    return i


def apply_arrival_at_rank(s: OccupancyState, r: int) -> OccupancyState:
    i = rank_queue_len(s, r)
    if i == s.b:
        return OccupancyState(s.N, s.b, s.Q, s.L + 1)
    Q = list(s.Q)
    Q[i] += 1
    return OccupancyState(s.N, s.b, tuple(Q), s.L)


def apply_departure_at_rank(s: OccupancyState, r: int) -> OccupancyState:
    """Potential departure at rank ``r``; a null event if that server is idle."""
    i = rank_queue_len(s, r)
    if i == 0:
        return s
    Q = list(s.Q)
    Q[i - 1] -= 1
    return OccupancyState(s.N, s.b, tuple(Q), s.L)


def tail_sum(s: OccupancyState, m: int) -> int:
    """``Q[m] + ... + Q[b] + L``; ``m = b + 1`` gives ``L`` alone."""
    if not 1 <= m <= s.b + 1:
        raise ContractViolation(f"level {m} outside 1..{s.b + 1}")
    return sum(s.Q[m - 1:]) + s.L


def fluid_scale(s: OccupancyState) -> FluidState:
    return FluidState(np.asarray(s.Q, dtype=float) / s.N)


def diffusion_scale(s: OccupancyState, k: int) -> DiffusionState:
    if not 1 <= k <= s.b:
        raise ContractViolation(f"k={k} must lie in 1..b={s.b}")
    root = math.sqrt(s.N)
    Qbar = np.empty(k)
    Qbar[0] = -(s.N - s.Q[0]) / root
    Qbar[1:] = np.asarray(s.Q[1:k], dtype=float) / root
    return DiffusionState(Qbar, 0.0)
