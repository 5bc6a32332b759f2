"""Dispatching rules as pure functions of (state, shared randomness).

Every decision returns the *rank* of the target server (1 = shortest queue)
or :data:`DISCARD`. Randomness is always passed in by the caller so that
several systems can consume the same draw.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional, Sequence

from .occupancy import ContractViolation, OccupancyState

DISCARD = 0


class ConfigError(ValueError):
    """Invalid policy or experiment configuration."""


class Kind(str, enum.Enum):
    JSQ = "JSQ"
    JSQ_D = "JSQ_D"
    MJSQ = "MJSQ"
    CJSQ_UNIFORM = "CJSQ_UNIFORM"
    JSQ_ND = "JSQ_ND"
    PI_C = "PI_C"
    BATCH_JSQ_D = "BATCH_JSQ_D"


CDF_LAYOUTS = ("tail", "idle_middle")


@dataclass(frozen=True)
class PolicySpec:
    """Which rule a simulated system follows.

    ``cdf_layout`` switches JSQ_D from explicit rank sampling to the
    inverse-CDF construction driven by the single uniform ``u_aux`` (used to
    couple JSQ(d) with the Pi(c) scheme).
    """

    kind: Kind
    d: int = 1
    n: int = 0
    c: float = 0.0
    ell: int = 1
    with_replacement: bool = True
    cdf_layout: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))

    @property
    def label(self) -> str:
        k = self.kind
        if k is Kind.JSQ:
            return "JSQ"
        if k is Kind.JSQ_D:
            tag = "" if self.with_replacement else ",wo"
            if self.cdf_layout:
                tag += f",cdf-{self.cdf_layout}"
            return f"JSQ(d={self.d}{tag})"
        if k is Kind.MJSQ:
            return f"MJSQ(n={self.n})"
        if k is Kind.CJSQ_UNIFORM:
            return f"CJSQ_UNIFORM(n={self.n})"
        if k is Kind.JSQ_ND:
            return f"JSQ(n={self.n},d={self.d})"
        if k is Kind.PI_C:
            return f"PI(c={self.c:g},d={self.d})"
        return f"BATCH_JSQ(d={self.d},ell={self.ell})"

    @property
    def uses_rank_samples(self) -> bool:
        return self.kind in (Kind.JSQ_D, Kind.JSQ_ND) and self.cdf_layout is None

    def validate(self, N: int, b: int | None = None):
        k = self.kind
        if k in (Kind.JSQ_D, Kind.JSQ_ND, Kind.PI_C, Kind.BATCH_JSQ_D) and self.d < 1:
            raise ConfigError(f"{self.label}: d must be >= 1")
        if k in (Kind.JSQ_D, Kind.JSQ_ND, Kind.BATCH_JSQ_D) and not self.with_replacement and self.d > N:
            raise ConfigError(f"{self.label}: cannot sample d={self.d} > N={N} without replacement")
        if k in (Kind.MJSQ, Kind.CJSQ_UNIFORM) and not 0 <= self.n <= N - 1:
            raise ConfigError(f"{self.label}: need 0 <= n <= N-1 (N={N})")
        if k is Kind.JSQ_ND and self.n < 0:
            raise ConfigError(f"{self.label}: n must be nonnegative")
        if k is Kind.PI_C and not 0 <= self.c <= N:
            raise ConfigError(f"{self.label}: need 0 <= c <= N")
        if k is Kind.BATCH_JSQ_D:
            if self.ell < 1:
                raise ConfigError("batch size must be >= 1")
            if self.d < self.ell:
                raise ConfigError(f"{self.label}: need d >= ell")
            if self.with_replacement:
                raise ConfigError("batch sampling is without replacement")
        if self.cdf_layout is not None:
            if k is not Kind.JSQ_D or not self.with_replacement:
                raise ConfigError("cdf_layout applies to JSQ_D with replacement only")
            if self.cdf_layout not in CDF_LAYOUTS:
                raise ConfigError(f"unknown cdf_layout {self.cdf_layout!r}")
            if self.cdf_layout == "idle_middle" and b is not None and b != 2:
                raise ConfigError("idle_middle layout is defined for b = 2 only")


# Named rules of N ----------------------------------------------------------

def evaluate_rule(rule, N: int, integer: bool = True):
    """Evaluate a parameter rule at system size ``N``.

    Accepted forms: a bare number, ``"const:K"``, ``"pow:a"`` (N**a),
    ``"sqrtlog"`` (sqrt(N) ln N), ``"logdiv:w"`` (sqrt(N) ln N / w, where w is a
    number or ``pow:a``), ``"frac:x"`` (x N), ``"hw:beta"`` (N - beta sqrt(N)),
    ``"sqrt:g"`` (g sqrt(N)), ``"N"`` (N itself). Integer rules round up.
    """
    if isinstance(rule, bool):
        raise ConfigError(f"unparseable rule {rule!r}")
    if isinstance(rule, (int, float)):
        value = float(rule)
    elif isinstance(rule, str):
        value = _eval_rule_str(rule.strip(), N)
    else:
        raise ConfigError(f"unparseable rule {rule!r}")
    if not math.isfinite(value):
        raise ConfigError(f"rule {rule!r} is not finite at N={N}")
    if integer:
        # Guard against 100**0.5 landing a hair above 10.
        return int(math.ceil(value - 1e-9))
    return value


def _eval_rule_str(rule: str, N: int) -> float:
    head, _, arg = rule.partition(":")
    try:
        if head == "N" and not arg:
            return float(N)
        if head == "sqrtlog" and not arg:
            return math.sqrt(N) * math.log(N)
        if head == "const":
            return float(arg)
        if head == "pow":
            return N ** float(arg)
        if head == "frac":
            return float(arg) * N
        if head == "hw":
            return N - float(arg) * math.sqrt(N)
        if head == "sqrt":
            return float(arg) * math.sqrt(N)
        if head == "logdiv":
            omega = _eval_rule_str(arg, N) if ":" in arg else float(arg)
            return math.sqrt(N) * math.log(N) / omega
        return float(rule)
    except (ValueError, ZeroDivisionError):
        pass
    raise ConfigError(f"unparseable rule {rule!r}")


# Decisions -----------------------------------------------------------------

def decide_jsq(s: OccupancyState) -> int:
    return 1


def decide_jsq_d(s: OccupancyState, d: int, ranks: Sequence[int]) -> int:
    """Shortest of the sampled servers.

    With servers kept in sorted order the smallest sampled rank holds the
    smallest sampled queue length.
    """
    if len(ranks) == 0:
        raise ContractViolation("JSQ(d) needs at least one sampled rank")
    return int(min(ranks))


def decide_jsq_d_cdf(s: OccupancyState, d: int, u: float, layout: str = "tail") -> int:
    """Target queue length for JSQ(d) with replacement, from one uniform.

    ``layout="tail"`` returns ``max{i : u < (Q[i]/N)**d}``. The
    ``"idle_middle"`` layout (b = 2 only) puts the length-1 interval first,
    then the idle interval, then the full-server interval; the marginal law
    is the same.
    """
    N = s.N
    tails = [1.0] + [(q / N) ** d for q in s.Q]
    if layout == "tail":
        level = 0
        for i in range(1, len(tails)):
            if u < tails[i]:
                level = i
            else:
                break
        return level
    if layout == "idle_middle":
        if s.b != 2:
            raise ContractViolation("idle_middle layout needs b = 2")
        p1 = tails[1] - tails[2]
        if u < p1:
            return 1
        if u < 1.0 - tails[2]:
            return 0
        return 2
    raise ContractViolation(f"unknown layout {layout!r}")


def lowest_rank_with_length(s: OccupancyState, level: int) -> int:
    """Lowest rank whose queue length is at least ``level``."""
    q = s.N if level == 0 else s.Q[level - 1]
    return s.N - q + 1


def decide_mjsq(s: OccupancyState, n: int) -> int:
    if not 0 <= n <= s.N - 1:
        raise ContractViolation(f"MJSQ needs n+1 <= N, got n={n}, N={s.N}")
    return n + 1


def _uniform_rank(u: float, width: int) -> int:
    return min(int(u * width) + 1, width)


def decide_cjsq_uniform(s: OccupancyState, n: int, u: float) -> int:
    """Uniform choice among the ``n + 1`` lowest-ordered servers."""
    if not 0 <= n <= s.N - 1:
        raise ContractViolation(f"CJSQ needs n+1 <= N, got n={n}, N={s.N}")
    return _uniform_rank(u, n + 1)


def decide_jsq_nd(s: OccupancyState, n: int, d: int, ranks: Sequence[int], u: float) -> int:
    r = decide_jsq_d(s, d, ranks)
    window = min(n + 1, s.N)
    if r <= window:
        return r
    return _uniform_rank(u, window)


def pi_c_assign_probability(N: int, c: float, d: int) -> float:
    return (1.0 - c / N) ** d


def decide_pi_c(s: OccupancyState, c: float, d: int, u: float) -> int:
    """Assign to a length-1 server w.p. ``(1 - c/N)**d``, else discard.

    If no server has length exactly 1 the task goes to the lowest busy rank
    (see :func:`pi_c_fallback_needed`).
    """
    if u < pi_c_assign_probability(s.N, c, d):
        return min(lowest_rank_with_length(s, 1), s.N)
    return DISCARD


def pi_c_fallback_needed(s: OccupancyState) -> bool:
    q2 = s.Q[1] if s.b >= 2 else 0
    return s.Q[0] == q2


def decide_batch_jsq_d(s: OccupancyState, ell: int, d: int, ranks: Sequence[int]) -> list[int]:
    if d < ell:
        raise ConfigError(f"batch JSQ(d) needs d >= ell, got d={d}, ell={ell}")
    if len(ranks) < ell:
        raise ContractViolation("fewer sampled ranks than batch size")
    return sorted(int(r) for r in ranks)[:ell]
