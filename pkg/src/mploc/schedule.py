"""Multi-scale parameter schedules and their constraint web.

A :class:`Schedule` fixes, for every particle number ``n <= N``, the
probability exponent ``p_n``, base regularity ``s0_n``, growth exponent
``tau_n`` and top regularity ``r_n``, together with the global resonance
exponent ``beta`` and the scale sequence ``L_k = L0^(4^k)``.

``derive_schedule`` produces the explicit choice used to prove localization;
``toy_schedule`` builds small-exponent schedules for falsifiable numerical
experiments.  :func:`constraints` evaluates every inequality with its margin
(positive = satisfied); :func:`validate` returns only the failures.
"""

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from typing import NamedTuple, Optional

import numpy as np

from . import lattice_sums
from .errors import DivergentTail

DELTA = 0.5
ZETA = 19 / 20


@dataclass(frozen=True)
class Level:
    n: int
    p: float
    s0: float
    tau: float
    r: float


@dataclass(frozen=True)
class Schedule:
    N: int
    d: int
    rho: float
    p0: float
    eps_slack: float
    beta: float
    levels: tuple
    L0: int = 2
    k_max: int = 1
    M: float = 1.0
    mode: str = "strict"
    delta: float = DELTA
    zeta: float = ZETA

    def level(self, n):
        for lev in self.levels:
            if lev.n == n:
                return lev
        raise KeyError(f"schedule has no level n = {n}")

    @property
    def interval(self):
        return (-self.M * self.N - 1.0, self.M * self.N + 1.0)

    @property
    def scales(self):
        """``[L_0, L_1, ..., L_kmax]`` as exact integers."""
        return [self.L0 ** (4**k) for k in range(self.k_max + 1)]

    @property
    def r_threshold(self):
        return r_threshold(self.N, self.d, self.rho)

    def with_level(self, n, **changes):
        levels = tuple(replace(lv, **changes) if lv.n == n else lv for lv in self.levels)
        return replace(self, levels=levels)

    def to_dict(self):
        out = asdict(self)
        out["levels"] = [asdict(lv) for lv in self.levels]
        return out

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        data["levels"] = tuple(Level(**lv) for lv in data["levels"])
        return cls(**data)

    def hash(self):
        text = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def r_threshold(N, d, rho):
    """Minimal hopping exponent for localization: ``40*18^N*20Nd/(9 rho) + 75Nd/9``."""
    return 40 * 18**N * 20 * N * d / (9 * rho) + 75 * N * d / 9


def derive_schedule(N, d, rho, p0, eps_slack=0.2, L0=2, k_max=1, M=1.0):
    """Explicit strict schedule.

    ``beta = 18^N p0 / (2 rho)``, ``s0_n = nd/2 + eps`` and
    ``tau_n = 4 beta + 7 s0_n + eps``, i.e. ``2 * 18^N p0 / rho + 7nd/2 + 8 eps``.
    ``r_N`` is one above the larger of ``2 tau_N + 4 s0_N`` and
    ``tau_N / (zeta - delta)``; lower levels add ``d`` per missing particle.
    """
    if N < 1 or d < 1 or rho <= 0 or p0 <= 0 or L0 < 2:
        raise ValueError("need N >= 1, d >= 1, rho > 0, p0 > 0, L0 >= 2")
    beta = 18**N * p0 / (2 * rho)
    s0 = {n: n * d / 2 + eps_slack for n in range(1, N + 1)}
    tau = {n: 4 * beta + 7 * s0[n] + eps_slack for n in range(1, N + 1)}
    r_top = max(2 * tau[N] + 4 * s0[N], tau[N] / (ZETA - DELTA)) + 1
    levels = tuple(
        Level(n, 18 ** (N - n) * p0, s0[n], tau[n], r_top + (N - n) * d)
        for n in range(1, N + 1))
    return Schedule(N, d, rho, p0, eps_slack, beta, levels, L0, k_max, M, "strict")


def toy_schedule(N=1, d=1, *, beta=1.0, tau=None, r=None, p0=1.0, rho=1.0,
                 eps_slack=0.1, tau_margin=1.0, L0=4, k_max=1, M=1.0):
    """Small-exponent schedule for experiments at desk scale.

    ``tau`` and ``r`` may be scalars (same for all levels), per-level
    sequences, or ``None``.  When omitted, ``tau_n`` is ``tau_margin`` above
    the largest of ``4 beta + 7 s0_n``, the initial-step requirement and
    ``tau_(n-1) + 3d/2``; ``r_n`` is one above the larger of
    ``2 tau_n + 4 s0_n`` and ``tau_n / (zeta - delta)``, raised where needed
    so that ``r_n`` decreases by at least ``d`` per level.
    """
    def per_level(v, n):
        if v is None or np.isscalar(v):
            return v
        return v[n - 1]

    s0 = {n: n * d / 2 + eps_slack for n in range(1, N + 1)}
    p = {n: 18 ** (N - n) * p0 for n in range(1, N + 1)}
    taus = {}
    for n in range(1, N + 1):
        t = per_level(tau, n)
        if t is None:
            t = max(4 * beta + 7 * s0[n], (2 * p[n] + (2 * n + 1) * d) / rho) + tau_margin
            if n > 1:
                t = max(t, taus[n - 1] + 1.5 * d + tau_margin)
        taus[n] = float(t)
    rs = {}
    for n in range(N, 0, -1):
        rr = per_level(r, n)
        if rr is None:
            rr = max(2 * taus[n] + 4 * s0[n], taus[n] / (ZETA - DELTA)) + 1
            if n < N:
                rr = max(rr, rs[n + 1] + d)
        rs[n] = float(rr)
    levels = [Level(n, p[n], s0[n], taus[n], rs[n]) for n in range(1, N + 1)]
    return Schedule(N, d, rho, p0, eps_slack, beta, tuple(levels), L0, k_max, M, "toy")


class Constraint(NamedTuple):
    id: str
    n: Optional[int]
    lhs: float
    rhs: float
    margin: float
    satisfied: bool

    def describe(self):
        where = "" if self.n is None else f" (n={self.n})"
        return f"{self.id}{where}: {self.lhs:.6g} < {self.rhs:.6g}, margin {self.margin:.6g}"


def _lt(cid, n, lhs, rhs, strict=True):
    margin = rhs - lhs
    return Constraint(cid, n, float(lhs), float(rhs), float(margin),
                      bool(margin > 0 if strict else margin >= 0))


def constraints(schedule, global_r=None, strict=None):
    """Evaluate every schedule inequality.

    ``strict`` (default: ``schedule.mode == "strict"``) adds the constraints
    tying ``p0`` and ``beta`` to the localization theorem's exponents.
    """
    S = schedule
    strict = (S.mode == "strict") if strict is None else strict
    N, d, rho, beta = S.N, S.d, S.rho, S.beta
    out = []
    if strict:
        out.append(_lt("p0 >= 20Nd", None, 20 * N * d, S.p0, strict=False))
        out.append(_lt("beta >= 18^N p0/(2 rho)", None, 18**N * S.p0 / (2 * rho), beta, strict=False))
    for lv in S.levels:
        n = lv.n
        out.append(_lt("s0 > nd/2", n, n * d / 2, lv.s0))
        out.append(_lt("s0 <= r_n", n, lv.s0, lv.r, strict=False))
        out.append(_lt("tau_n > 4 beta + 7 s0", n, 4 * beta + 7 * lv.s0, lv.tau))
        out.append(_lt("r_n > 2 tau_n + 4 s0", n, 2 * lv.tau + 4 * lv.s0, lv.r))
        out.append(_lt("coupling (i): -r/2 + tau + 2 s0 < 0", n, -lv.r / 2 + lv.tau + 2 * lv.s0, 0.0))
        out.append(_lt("coupling (ii): -r + tau + 4 beta + 7.5 s0 < 0", n,
                       -lv.r + lv.tau + 4 * beta + 7.5 * lv.s0, 0.0))
        out.append(_lt("coupling (iii): tau/2 + 2 beta + 3.5 s0 < tau", n,
                       lv.tau / 2 + 2 * beta + 3.5 * lv.s0, lv.tau))
        out.append(_lt("initial step: tau_n > (2 p_n + (2n+1)d)/rho", n,
                       (2 * lv.p + (2 * n + 1) * d) / rho, lv.tau))
        out.append(_lt("decay: tau_n + delta r_n < zeta r_n", n,
                       lv.tau + S.delta * lv.r, S.zeta * lv.r))
        if strict:
            out.append(_lt("p_n = 18^(N-n) p0", n, abs(lv.p - 18 ** (N - n) * S.p0), 1e-9 * lv.p))
    for m in S.levels:
        for lv in S.levels:
            if m.n < lv.n:
                out.append(_lt("tau_n > tau_m + 3(n-m)d/2", lv.n, m.tau + 1.5 * (lv.n - m.n) * d, lv.tau))
    for prev, lv in zip(S.levels, S.levels[1:]):
        out.append(_lt("r_n < r_(n-1) - d/2", lv.n, lv.r, prev.r - d / 2))
    if strict:
        top = S.level(N)
        out.append(_lt("r_N > 40*18^N p0/(9 rho) + 70Nd/9", N,
                       40 * 18**N * S.p0 / (9 * rho) + 70 * N * d / 9, top.r))
    if global_r is not None:
        if strict:
            out.append(_lt("r > r_threshold", None, S.r_threshold, global_r))
        for lv in S.levels:
            out.append(_lt("r_n < r - nd/2", lv.n, lv.r, global_r - lv.n * d / 2))
    return out


def validate(schedule, global_r=None, strict=None):
    """Constraints that fail; an empty list means the schedule is consistent."""
    return [c for c in constraints(schedule, global_r, strict) if not c.satisfied]


@dataclass
class TailSumReport:
    theta: float
    dim: int
    L: list
    sums: list
    slope: float
    lemma_rate: float
    bounds: list = field(default_factory=list)

    @property
    def ok(self):
        return self.slope <= -self.lemma_rate


def tail_sum_check(theta, dim, L_list, cutoff=4096):
    """Tail sums ``S(L) = sum_{|u| >= L} |u|^-theta`` over ``Z^dim`` and their decay rate.

    Shells below ``cutoff`` are summed directly; the remainder is the exact
    Hurwitz-zeta tail.  The fitted log-log slope is compared against the
    guaranteed rate ``(theta - dim) / 2``.
    """
    if theta - dim <= 1:
        raise DivergentTail(f"need theta - dim > 1, got {theta - dim}")
    if any(L <= 2 for L in L_list):
        raise ValueError("all L must exceed 2")
    sums = []
    for L in L_list:
        top = max(cutoff, L)
        sums.append(lattice_sums.tail_sum_direct(theta, dim, L, top)
                    + lattice_sums.tail_sum(theta, dim, top))
    slope = float(np.polyfit(np.log(L_list), np.log(sums), 1)[0])
    rate = (theta - dim) / 2
    return TailSumReport(theta, dim, list(L_list), sums, slope, rate,
                         [float(L) ** (-rate) for L in L_list])
