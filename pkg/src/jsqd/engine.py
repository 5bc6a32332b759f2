"""Uniformized event engine for S-coupled many-server systems.

All configured systems are driven by one event stream: events occur at
total rate ``lambda + N``; each is an arrival with probability
``lambda / (lambda + N)`` and otherwise a potential departure at a uniformly
chosen rank (a null event when that server is idle). Every system reads the
same draw, which synchronizes arrival clocks and rank-indexed departure
clocks across policies.

Rank samples for JSQ(d) with replacement are carried as prefix minima: for
each configured ``d`` the draw holds the minimum of the first ``d`` entries of
one shared vector of i.i.d. uniform ranks. Block minima are sampled exactly
by inversion (the minimum of ``k`` uniform ranks is ``N - floor(N U**(1/k))``),
so policies with large ``d`` cost O(1) per arrival.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Iterator, Optional, Sequence

import numpy as np

from . import _kernel
from .occupancy import (
    OccupancyState,
    apply_arrival_at_rank,
    apply_departure_at_rank,
    rank_queue_len,
    tail_sum,
)
from .policies import (
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
    lowest_rank_with_length,
    pi_c_fallback_needed,
)


class InvariantViolation(RuntimeError):
    """A coupling invariant failed; always an engine bug."""

    def __init__(self, message, event_index=None, states=None):
        super().__init__(message)
        self.event_index = event_index
        self.states = states


@dataclass(frozen=True)
class SimConfig:
    N: int
    lam: float
    b: int
    T: float
    seed: int
    policies: tuple
    snapshot_dt: float = 0.1
    batch_ell: Optional[int] = None
    audit: bool = False
    init: object = "empty"
    ordering_pairs: Optional[tuple] = None
    sandwich_triples: Optional[tuple] = None

    def __post_init__(self):
        object.__setattr__(self, "policies", tuple(self.policies))
        if self.N < 1 or self.b < 1:
            raise ConfigError("N and b must be positive")
        if self.lam < 0 or not self.T > 0 or not self.snapshot_dt > 0:
            raise ConfigError("need lam >= 0, T > 0, snapshot_dt > 0")
        if not self.policies:
            raise ConfigError("at least one policy is required")
        for p in self.policies:
            p.validate(self.N, self.b)
            if p.kind is Kind.BATCH_JSQ_D and self.batch_ell != p.ell:
                raise ConfigError("BATCH_JSQ_D needs batch mode with matching ell")
        if self.batch_ell is not None:
            if self.batch_ell < 1:
                raise ConfigError("batch size must be >= 1")
            bad = [p.label for p in self.policies if p.kind not in (Kind.JSQ, Kind.MJSQ, Kind.BATCH_JSQ_D)]
            if bad:
                raise ConfigError(f"batch mode supports JSQ, MJSQ and BATCH_JSQ_D only, got {bad}")
        if any(p.kind is Kind.PI_C for p in self.policies) and self.b != 2:
            raise ConfigError("PI_C runs on the b = 2 truncated system")
        self.initial_states()

    @property
    def arrival_event_rate(self) -> float:
        return self.lam / self.batch_ell if self.batch_ell else self.lam

    @property
    def d_levels(self) -> tuple[int, ...]:
        return tuple(sorted({p.d for p in self.policies if p.uses_rank_samples and p.with_replacement}))

    @property
    def distinct_width(self) -> int:
        ds = [p.d for p in self.policies
              if (p.uses_rank_samples or p.kind is Kind.BATCH_JSQ_D) and not p.with_replacement and p.d < self.N]
        return max(ds, default=0)

    def initial_states(self) -> list[OccupancyState]:
        P = len(self.policies)
        if isinstance(self.init, str):
            if self.init == "empty":
                return [OccupancyState.empty(self.N, self.b)] * P
            if self.init == "all_busy":
                return [OccupancyState.all_busy(self.N, self.b)] * P
            raise ConfigError(f"unknown init {self.init!r}")
        states = [s if isinstance(s, OccupancyState) else OccupancyState(self.N, self.b, tuple(s)) for s in self.init]
        if len(states) != P:
            raise ConfigError("need one initial state per policy")
        return states


def replication_seed(master_seed: int, rep: int) -> int:
    """Independent 64-bit seed for replication ``rep`` of a master seed."""
    ss = np.random.SeedSequence(master_seed, spawn_key=(rep,))
    return int(ss.generate_state(1, np.uint64)[0])


# Event stream ----------------------------------------------------------------

@dataclass
class EventChunk:
    t: np.ndarray
    arrival: np.ndarray
    dep_rank: np.ndarray
    sample_min: np.ndarray
    distinct: np.ndarray
    u_aux: np.ndarray
    u_fallback: np.ndarray

    def __len__(self):
        return self.t.shape[0]


@dataclass(frozen=True)
class CouplingDraw:
    """Shared randomness of one event, consumed identically by every system."""

    t: float
    is_arrival: bool
    dep_rank: int
    sample_min: dict
    distinct: tuple
    u_aux: float
    u_fallback: float
    ell: int = 1

    def ranks_for(self, policy: PolicySpec, N: int) -> list[int]:
        if policy.with_replacement:
            return [self.sample_min[policy.d]]
        if policy.d >= N:
            return list(range(1, N + 1))
        return list(self.distinct[:policy.d])


def _chunk_size(cfg: SimConfig) -> int:
    width = len(cfg.d_levels) + cfg.distinct_width + 6
    return int(max(1024, min(1 << 16, (1 << 22) // width)))


def generate_event_stream(cfg: SimConfig, seed: Optional[int] = None) -> Iterator[EventChunk]:
    """Chunks of coupled events; the final chunk runs past ``cfg.T``."""
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    N = cfg.N
    lam = cfg.arrival_event_rate
    total = lam + N
    p_arr = lam / total
    levels = cfg.d_levels
    blocks = np.diff((0,) + levels)
    D = cfg.distinct_width
    size = _chunk_size(cfg)
    t0 = 0.0
    while True:
        gaps = rng.exponential(1.0 / total, size)
        t = t0 + np.cumsum(gaps)
        arrival = rng.random(size) < p_arr
        dep_rank = rng.integers(1, N + 1, size)
        if levels:
            u = rng.random((size, len(levels)))
            mins = N - np.floor(N * u ** (1.0 / blocks)).astype(np.int64)
            sample_min = np.minimum.accumulate(np.clip(mins, 1, N), axis=1)
        else:
            sample_min = np.zeros((size, 0), dtype=np.int64)
        if D:
            distinct = _kernel.distinct_ranks(rng.random((size, D)), N)
        else:
            distinct = np.zeros((size, 0), dtype=np.int64)
        u_aux = rng.random(size)
        u_fallback = rng.random(size)
        yield EventChunk(t, arrival, dep_rank, sample_min, distinct, u_aux, u_fallback)
        t0 = t[-1]
        if t0 > cfg.T:
            return


def iter_draws(cfg: SimConfig, seed: Optional[int] = None) -> Iterator[CouplingDraw]:
    levels = cfg.d_levels
    ell = cfg.batch_ell or 1
    for ch in generate_event_stream(cfg, seed):
        for e in range(len(ch)):
            yield CouplingDraw(
                t=float(ch.t[e]),
                is_arrival=bool(ch.arrival[e]),
                dep_rank=int(ch.dep_rank[e]),
                sample_min={d: int(ch.sample_min[e, j]) for j, d in enumerate(levels)},
                distinct=tuple(int(x) for x in ch.distinct[e]),
                u_aux=float(ch.u_aux[e]),
                u_fallback=float(ch.u_fallback[e]),
                ell=ell,
            )


# Reference stepping ----------------------------------------------------------

def decide(policy: PolicySpec, s: OccupancyState, draw: CouplingDraw) -> int:
    """Rank chosen by ``policy`` for a single arrival (``DISCARD`` = 0)."""
    k = policy.kind
    if k is Kind.JSQ:
        return decide_jsq(s)
    if k is Kind.MJSQ:
        return decide_mjsq(s, policy.n)
    if k is Kind.CJSQ_UNIFORM:
        return decide_cjsq_uniform(s, policy.n, draw.u_aux)
    if k is Kind.PI_C:
        return decide_pi_c(s, policy.c, policy.d, draw.u_aux)
    if k is Kind.JSQ_D and policy.cdf_layout:
        level = decide_jsq_d_cdf(s, policy.d, draw.u_aux, policy.cdf_layout)
        return lowest_rank_with_length(s, level)
    ranks = draw.ranks_for(policy, s.N)
    if k is Kind.JSQ_D:
        return decide_jsq_d(s, policy.d, ranks)
    if k is Kind.JSQ_ND:
        return decide_jsq_nd(s, policy.n, policy.d, ranks, draw.u_fallback)
    raise ConfigError(f"{policy.label} cannot serve single arrivals")


def apply_batch(s: OccupancyState, ranks: Sequence[int]) -> OccupancyState:
    """Assign one task to each listed rank simultaneously.

    Queue lengths are read off the pre-arrival state; distinct servers at the
    same length raise the same tail count by one each.
    """
    lengths = [rank_queue_len(s, r) for r in ranks]
    Q = list(s.Q)
    L = s.L
    for i in lengths:
        if i == s.b:
            L += 1
        else:
            Q[i] += 1
    return OccupancyState(s.N, s.b, tuple(Q), L)


def _depart(policy: PolicySpec, s: OccupancyState, r: int) -> OccupancyState:
    # Pi(c) refills a server that empties with a dummy task.
    if policy.kind is Kind.PI_C and rank_queue_len(s, r) == 1:
        return s
    return apply_departure_at_rank(s, r)


@dataclass
class StepResult:
    states: list
    chosen: list
    differ: dict
    fallback: list


def step_coupled(states: Sequence[OccupancyState], draw: CouplingDraw, policies: Sequence[PolicySpec]) -> StepResult:
    """Apply one shared event to every system.

    ``differ[(p, q)]`` is true when systems ``p < q`` sent a single arrival
    to different ranks.
    """
    if len({(s.N, s.b) for s in states}) != 1:
        raise ConfigError("coupled systems must share N and b")
    if len(states) != len(policies):
        raise ConfigError("need one state per policy")
    P = len(states)
    fallback = [False] * P
    if not draw.is_arrival:
        new = [_depart(pol, s, draw.dep_rank) for pol, s in zip(policies, states)]
        return StepResult(new, [None] * P, {}, fallback)
    if draw.ell > 1 or any(p.kind is Kind.BATCH_JSQ_D for p in policies):
        new = []
        for pol, s in zip(policies, states):
            if pol.kind is Kind.BATCH_JSQ_D:
                new.append(apply_batch(s, decide_batch_jsq_d(s, pol.ell, pol.d, draw.ranks_for(pol, s.N))))
            else:
                for _ in range(draw.ell):
                    s = apply_arrival_at_rank(s, decide(pol, s, draw))
                new.append(s)
        return StepResult(new, [None] * P, {}, fallback)
    chosen = []
    new = []
    for p, (pol, s) in enumerate(zip(policies, states)):
        r = decide(pol, s, draw)
        if pol.kind is Kind.PI_C and r != DISCARD:
            fallback[p] = pi_c_fallback_needed(s)
        chosen.append(r)
        if r == DISCARD:
            new.append(replace(s, L=s.L + 1))
        else:
            new.append(apply_arrival_at_rank(s, r))
    differ = {(p, q): chosen[p] != chosen[q] for p, q in itertools.combinations(range(P), 2)}
    return StepResult(new, chosen, differ, fallback)


# Invariant auditors ------------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    kind: str
    systems: tuple
    level: int
    detail: str = ""


def assert_orderings(states: Sequence[OccupancyState]) -> Optional[Violation]:
    """Check the tail-sum chain and sandwich bounds for (JSQ, CJSQ member, MJSQ).

    Returns the first violated inequality, or ``None``.
    """
    lo, mid, hi = states
    b = lo.b
    for m in range(1, b + 1):
        if tail_sum(lo, m) > tail_sum(mid, m):
            return Violation("order", (0, 1), m, f"{tail_sum(lo, m)} > {tail_sum(mid, m)}")
        if tail_sum(mid, m) > tail_sum(hi, m):
            return Violation("order", (1, 2), m, f"{tail_sum(mid, m)} > {tail_sum(hi, m)}")
    for m in range(1, b + 1):
        q = mid.Q[m - 1]
        lower = tail_sum(lo, m) - tail_sum(hi, m + 1)
        upper = tail_sum(hi, m) - tail_sum(lo, m + 1)
        if q < lower:
            return Violation("sandwich_lower", (0, 1, 2), m, f"Q={q} < {lower}")
        if q > upper:
            return Violation("sandwich_upper", (0, 1, 2), m, f"Q={q} > {upper}")
    return None


def l1_distance(a: OccupancyState, b: OccupancyState) -> int:
    return sum(abs(x - y) for x, y in zip(a.Q, b.Q))


def l1_delta_bound_check(a: OccupancyState, b: OccupancyState, delta: int) -> Optional[Violation]:
    lhs = l1_distance(a, b)
    if lhs > 2 * delta:
        return Violation("l1_delta", (0, 1), 0, f"sum|dQ|={lhs} > 2*Delta={2 * delta}")
    return None


# Compiled driver ------------------------------------------------------------

_KIND_CODE = {
    Kind.JSQ: _kernel.K_JSQ,
    Kind.JSQ_D: _kernel.K_JSQ_D,
    Kind.MJSQ: _kernel.K_MJSQ,
    Kind.CJSQ_UNIFORM: _kernel.K_CJSQ,
    Kind.JSQ_ND: _kernel.K_JSQ_ND,
    Kind.PI_C: _kernel.K_PI_C,
    Kind.BATCH_JSQ_D: _kernel.K_BATCH,
}

_VIOLATION_NAMES = {
    _kernel.V_L1: "l1_delta",
    _kernel.V_ORDER: "order",
    _kernel.V_SANDWICH_LO: "sandwich_lower",
    _kernel.V_SANDWICH_HI: "sandwich_upper",
}


def _class_window(p: PolicySpec, N: int) -> Optional[int]:
    """``n`` such that the policy always picks among the n+1 lowest ranks."""
    if p.kind is Kind.JSQ:
        return 0
    if p.kind in (Kind.MJSQ, Kind.CJSQ_UNIFORM, Kind.JSQ_ND):
        return min(p.n, N - 1)
    return None


def default_ordering_pairs(cfg: SimConfig) -> tuple:
    """Pairs (lo, hi) whose chosen ranks satisfy rank_lo <= rank_hi at every arrival."""
    pairs = []
    pols = cfg.policies
    if cfg.batch_ell:
        return ()
    for i, a in enumerate(pols):
        for j, c in enumerate(pols):
            if i == j or Kind.PI_C in (a.kind, c.kind):
                continue
            if a.kind is Kind.JSQ and c.kind is not Kind.JSQ:
                pairs.append((i, j))
            elif c.kind is Kind.MJSQ and a.kind is not Kind.JSQ:
                wa = _class_window(a, cfg.N)
                if wa is not None and wa <= c.n and not (a.kind is Kind.MJSQ and a.n == c.n and i > j):
                    pairs.append((i, j))
    return tuple(pairs)


def default_sandwich_triples(cfg: SimConfig) -> tuple:
    pairs = set(default_ordering_pairs(cfg))
    triples = []
    for lo, mid, hi in itertools.permutations(range(len(cfg.policies)), 3):
        if cfg.policies[lo].kind is Kind.JSQ and cfg.policies[hi].kind is Kind.MJSQ \
                and (lo, mid) in pairs and (mid, hi) in pairs:
            triples.append((lo, mid, hi))
    return tuple(triples)


@dataclass
class CoupledRun:
    """Snapshots and counters from one coupled run.

    ``Q[k, p, i-1]`` is the tail count at level ``i`` of system ``p`` at
    ``times[k]``; ``delta[k, p, q]`` counts differing decisions so far.
    """

    config: SimConfig
    times: np.ndarray
    Q: np.ndarray
    L: np.ndarray
    delta: np.ndarray
    arrivals: int
    arrival_epochs: int
    events: int
    qmax: np.ndarray
    fallback: np.ndarray
    final_states: list = field(default_factory=list)

    @property
    def labels(self) -> list[str]:
        return [p.label for p in self.config.policies]

    def fluid(self, p: int) -> np.ndarray:
        return self.Q[:, p, :] / self.config.N

    def diffusion(self, p: int, k: Optional[int] = None) -> np.ndarray:
        """Centered/scaled snapshots of system ``p`` for levels 1..k."""
        k = self.config.b if k is None else k
        N = self.config.N
        out = self.Q[:, p, :k].astype(float) / math.sqrt(N)
        out[:, 0] = -(N - self.Q[:, p, 0]) / math.sqrt(N)
        return out

    def delta_final(self, p: int, q: int) -> int:
        return int(self.delta[-1, p, q])


def snapshot_grid(T: float, dt: float) -> np.ndarray:
    n = int(math.floor(T / dt + 1e-9))
    return np.arange(n + 1) * dt


def _policy_arrays(cfg: SimConfig):
    pols = cfg.policies
    N = cfg.N
    levels = cfg.d_levels
    kind = np.array([_KIND_CODE[p.kind] for p in pols], dtype=np.int64)
    pd = np.array([p.d for p in pols], dtype=np.int64)
    pn = np.array([p.n for p in pols], dtype=np.int64)
    pi_prob = np.array([(1.0 - p.c / N) ** p.d if p.kind is Kind.PI_C else 0.0 for p in pols])
    pell = np.array([p.ell for p in pols], dtype=np.int64)
    sample_col = np.array([levels.index(p.d) if p.uses_rank_samples and p.with_replacement else -1
                           for p in pols], dtype=np.int64)
    wo_d = np.array([p.d if not p.with_replacement else 0 for p in pols], dtype=np.int64)
    cdf = np.array([{None: 0, "tail": 1, "idle_middle": 2}[p.cdf_layout] for p in pols], dtype=np.int64)
    return kind, pd, pn, pi_prob, pell, sample_col, wo_d, cdf


def run_coupled(cfg: SimConfig) -> CoupledRun:
    """Evolve every configured policy on one shared event stream up to ``cfg.T``.

    Deterministic in ``(cfg, cfg.seed)``. With ``cfg.audit`` set, the l1/Delta
    bound (for systems started from equal states), the tail-sum orderings and
    the sandwich bounds are checked after every event; a failure raises
    :class:`InvariantViolation`.
    """
    N, b = cfg.N, cfg.b
    P = len(cfg.policies)
    init = cfg.initial_states()
    Q = np.zeros((P, b + 1), dtype=np.int64)
    Q[:, 0] = N
    for p, s in enumerate(init):
        Q[p, 1:] = s.Q
    L = np.array([s.L for s in init], dtype=np.int64)
    qmax = Q.copy()
    delta = np.zeros((P, P), dtype=np.int64)
    fallback = np.zeros(P, dtype=np.int64)
    counters = np.zeros(4, dtype=np.int64)
    times = snapshot_grid(cfg.T, cfg.snapshot_dt)
    S = times.shape[0]
    snap_Q = np.zeros((S, P, b), dtype=np.int64)
    snap_L = np.zeros((S, P), dtype=np.int64)
    snap_delta = np.zeros((S, P, P), dtype=np.int64)

    non_pi = [p for p in range(P) if cfg.policies[p].kind is not Kind.PI_C]
    l1_pairs = [(p, q) for p, q in itertools.combinations(non_pi, 2)
                if init[p] == init[q] and not cfg.batch_ell]
    ord_pairs = default_ordering_pairs(cfg) if cfg.ordering_pairs is None else cfg.ordering_pairs
    triples = default_sandwich_triples(cfg) if cfg.sandwich_triples is None else cfg.sandwich_triples
    as_arr = lambda x, w: np.array(x, dtype=np.int64).reshape(-1, w)
    l1_pairs, ord_pairs, triples = as_arr(l1_pairs, 2), as_arr(ord_pairs, 2), as_arr(triples, 3)
    info = np.zeros(5, dtype=np.int64)
    parr = _policy_arrays(cfg)

    for ch in generate_event_stream(cfg):
        status = _kernel.advance(
            ch.t, ch.arrival, ch.dep_rank, ch.sample_min, ch.distinct, ch.u_aux, ch.u_fallback,
            N, b, float(cfg.T), int(cfg.batch_ell or 0), *parr,
            Q, L, qmax, delta, fallback, counters,
            times, snap_Q, snap_L, snap_delta,
            bool(cfg.audit), l1_pairs, ord_pairs, triples, info)
        if status == _kernel.VIOLATION:
            event, code = int(info[0]), int(info[1])
            states = [OccupancyState(N, b, tuple(Q[p, 1:]), int(L[p])) for p in range(P)]
            raise InvariantViolation(
                f"{_VIOLATION_NAMES[code]} violated after event {event} "
                f"(systems {int(info[2])},{int(info[3])}, level {int(info[4])}): "
                + "; ".join(f"{pol.label}: Q={s.Q} L={s.L}" for pol, s in zip(cfg.policies, states)),
                event_index=event, states=states)
        if status == _kernel.DONE:
            break

    final = [OccupancyState(N, b, tuple(int(x) for x in Q[p, 1:]), int(L[p])) for p in range(P)]
    return CoupledRun(cfg, times, snap_Q, snap_L, snap_delta, int(counters[0]), int(counters[1]),
                      int(counters[2]), qmax[:, 1:].copy(), fallback, final)


def run_reference(cfg: SimConfig, audit: bool = True) -> CoupledRun:
    """Pure-Python twin of :func:`run_coupled` (slow; used to cross-check the kernel)."""
    pols = cfg.policies
    P = len(pols)
    states = cfg.initial_states()
    equal_start = {(p, q): states[p] == states[q] for p, q in itertools.combinations(range(P), 2)}
    ord_pairs = default_ordering_pairs(cfg) if cfg.ordering_pairs is None else cfg.ordering_pairs
    triples = default_sandwich_triples(cfg) if cfg.sandwich_triples is None else cfg.sandwich_triples
    delta = np.zeros((P, P), dtype=np.int64)
    qmax = np.array([s.Q for s in states], dtype=np.int64)
    fallback = np.zeros(P, dtype=np.int64)
    times = snapshot_grid(cfg.T, cfg.snapshot_dt)
    snaps_Q, snaps_L, snaps_delta = [], [], []
    arrivals = epochs = events = 0
    k = 0
    for draw in iter_draws(cfg):
        while k < len(times) and times[k] < draw.t:
            snaps_Q.append([s.Q for s in states])
            snaps_L.append([s.L for s in states])
            snaps_delta.append(delta.copy())
            k += 1
        if draw.t > cfg.T:
            break
        res = step_coupled(states, draw, pols)
        states = res.states
        if draw.is_arrival:
            arrivals += draw.ell
            epochs += 1
        for (p, q), flag in res.differ.items():
            if flag:
                delta[p, q] += 1
                delta[q, p] += 1
        fallback += np.array(res.fallback, dtype=np.int64)
        qmax = np.maximum(qmax, [s.Q for s in states])
        events += 1
        if audit and cfg.audit:
            for (p, q), same in equal_start.items():
                if same and not cfg.batch_ell and Kind.PI_C not in (pols[p].kind, pols[q].kind):
                    v = l1_delta_bound_check(states[p], states[q], int(delta[p, q]))
                    if v:
                        raise InvariantViolation(f"{v} at event {events - 1}", events - 1, states)
            for lo, hi in ord_pairs:
                for m in range(1, cfg.b + 1):
                    if tail_sum(states[lo], m) > tail_sum(states[hi], m):
                        raise InvariantViolation(f"order ({lo},{hi}) level {m}", events - 1, states)
            for tri in triples:
                v = assert_orderings([states[i] for i in tri])
                if v:
                    raise InvariantViolation(f"{v} at event {events - 1}", events - 1, states)
    return CoupledRun(cfg, times, np.array(snaps_Q, dtype=np.int64).reshape(len(times), P, cfg.b),
                      np.array(snaps_L, dtype=np.int64).reshape(len(times), P),
                      np.array(snaps_delta, dtype=np.int64).reshape(len(times), P, P),
                      arrivals, epochs, events, qmax, fallback, list(states))


def run_pi_c_mode(cfg: SimConfig) -> CoupledRun:
    """Run a configuration containing Pi(c) systems from the all-busy state.

    JSQ(d) systems in the same run are switched to the single-uniform
    ``idle_middle`` layout, so they share ``u_aux`` with Pi(c) as in the
    comparison construction for the necessity argument.
    """
    if cfg.b != 2:
        raise ConfigError("Pi(c) mode needs b = 2")
    if not any(p.kind is Kind.PI_C for p in cfg.policies):
        raise ConfigError("no PI_C policy configured")
    pols = tuple(replace(p, cdf_layout="idle_middle") if p.kind is Kind.JSQ_D and p.with_replacement else p
                 for p in cfg.policies)
    return run_coupled(replace(cfg, policies=pols, init="all_busy"))


# Statistics over coupled runs --------------------------------------------------

@dataclass(frozen=True)
class DeltaReport:
    p: float
    p_exact: float
    mean_delta: float
    mean_expected: float
    std_error: float
    z: float
    z_exact: float


def delta_tail_check(arrivals: Sequence[int], deltas: Sequence[int], N: int, n: int, d: int) -> DeltaReport:
    """Compare Delta(T) with its binomial mean given A(T).

    ``p = (1 - n/N)**d`` is the per-arrival probability that none of the
    ``n`` lowest ranks is sampled; ``p_exact`` uses the ``n + 1`` window the
    JSQ(n,d) rule actually accepts. Z-scores use residuals ``Delta - A p``.
    """
    A = np.asarray(arrivals, dtype=float)
    D = np.asarray(deltas, dtype=float)
    if d < 1:
        raise ConfigError("d must be >= 1")
    p = (1.0 - n / N) ** d if n < N else 0.0
    p_exact = (1.0 - min(n + 1, N) / N) ** d
    R = A.shape[0]

    def z_of(prob):
        resid = D - A * prob
        se = resid.std(ddof=1) / math.sqrt(R) if R > 1 else float("nan")
        if se == 0:
            return 0.0 if resid.mean() == 0 else math.copysign(math.inf, resid.mean()), se
        return resid.mean() / se, se

    z, se = z_of(p)
    z_ex, _ = z_of(p_exact)
    return DeltaReport(p, p_exact, float(D.mean()), float((A * p).mean()), float(se), float(z), float(z_ex))
