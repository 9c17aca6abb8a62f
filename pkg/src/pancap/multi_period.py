"""Planning over several periods with carryover demand.

Each period is solved at stationarity; whatever mass is left in queues and
repositories at the period end re-enters the next period as a uniform
arrival-rate increment.  An optimal multi-period plan only ever uses the
per-period extreme points, so the planner enumerates chains of candidates
(exhaustively, the horizon is short) and a myopic baseline picks the best
point period by period.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .combinations import Candidate
from .model import ModelError, PeriodParams, StationaryState
from .single_period import OBJ_TIE_TOL, enumerate_candidates

DEFAULT_DEPTH_CAP = 4
FULL_TOL = 1e-9


class DepthExceeded(ModelError):
    """Horizon longer than the configured enumeration cap."""


@dataclass(frozen=True)
class Buffers:
    """Masses carried over to the next period, by severity and disease."""

    b1: float
    b2c: float
    b2n: float
    b3: float

    def total(self) -> float:
        return self.b1 + self.b2c + self.b2n + self.b3


ZERO_BUFFERS = Buffers(0.0, 0.0, 0.0, 0.0)


def _lped_s2_flows(state: StationaryState,
                   params: PeriodParams) -> tuple[float, float]:
    """Rates of COVID / non-COVID s2 patients entering the low-priority ED."""
    pr = params
    a2c = pr.lam2c + pr.beta2 * state.h2c
    a2n = pr.lam2n + pr.beta2 * state.h2n
    covid = state.a_e2 * a2c * ((1 - pr.p) + pr.p * (1 - state.a_c))
    noncov = state.a_e2 * a2n * ((1 - pr.p) + pr.p * (1 - state.a_n))
    return covid, noncov


def compute_buffers(cand: Candidate, params: PeriodParams) -> Buffers:
    """Period-end masses owed to the next period.

    The low-priority ED queue belongs wholly to severity 3 while that class
    is only partially served (its tolerance exceeds the s2 one, so the queue
    sits at the s3 threshold); once s3 is fully served the queue is s2 mass,
    split between disease types in proportion to their inflows.
    """
    st = cand.state
    b1 = st.h1 + st.q_e1
    if st.a_e3 >= 1 - FULL_TOL:
        covid, noncov = _lped_s2_flows(st, params)
        tot = covid + noncov
        share_c = 0.5 if tot <= 1e-12 else covid / tot
        b2c = st.h2c + st.q_c + st.q_e23 * share_c
        b2n = st.h2n + st.q_n + st.q_e23 * (1 - share_c)
        b3 = st.h3
    else:
        b2c = st.h2c + st.q_c
        b2n = st.h2n + st.q_n
        b3 = st.h3 + st.q_e23
    return Buffers(b1, b2c, b2n, b3)


def effective_params(base: PeriodParams, prev: Buffers) -> PeriodParams:
    """Fold the previous period's leftovers into this period's arrival rates."""
    if base.t <= 0:
        raise ValueError("period length must be positive")
    if prev.total() == 0.0:
        return base
    lam1 = base.lambda1 + prev.b1 / base.t
    lam3 = base.lambda3 + prev.b3 / base.t
    covid_rate = base.lambda2 * base.p_covid + prev.b2c / base.t
    noncov_rate = base.lambda2 * (1 - base.p_covid) + prev.b2n / base.t
    lam2 = covid_rate + noncov_rate
    p_covid = base.p_covid if lam2 <= 0 else covid_rate / lam2
    return replace(base, lambda1=lam1, lambda2=lam2, lambda3=lam3,
                   p_covid=p_covid)


def terminal_severity_masses(state: StationaryState) -> tuple[float, float, float]:
    """End-of-horizon stored mass per severity (queue attribution as in
    compute_buffers: the LPED queue is s2 when s3 is fully served, else s3)."""
    s2q = state.q_e23 if state.a_e3 >= 1 - FULL_TOL else 0.0
    s3q = 0.0 if state.a_e3 >= 1 - FULL_TOL else state.q_e23
    m1 = state.q_e1 + state.h1
    m2 = state.q_c + state.q_n + state.h2c + state.h2n + s2q
    m3 = state.h3 + s3q
    return m1, m2, m3


def global_objective(per_period: list[tuple[float, float]],
                     terminal: StationaryState,
                     weights: tuple[float, float, float]) -> float:
    """Time-weighted average of the period costs plus a terminal penalty for
    everyone still stored in the system at the end of the horizon."""
    if not per_period:
        raise ValueError("need at least one period")
    m1, m2, m3 = terminal_severity_masses(terminal)
    s1, s2, s3 = weights
    total_t = sum(t for _, t in per_period)
    acc = sum(obj * t for obj, t in per_period)
    return (acc + s1 * m1 + s2 * m2 + s3 * m3) / total_t


@dataclass(frozen=True)
class Plan:
    choices: tuple[Candidate, ...]
    effective: tuple[PeriodParams, ...]
    objectives: tuple[float, ...]
    global_objective: float

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(c.label for c in self.choices)


@dataclass(frozen=True)
class Chain:
    """One enumerated plan, kept for the full comparison table."""

    choices: tuple[Candidate, ...]
    objectives: tuple[float, ...]
    global_objective: float

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(c.label for c in self.choices)


def _tie_key(choices: tuple[Candidate, ...]) -> tuple:
    return tuple((-c.full_slots(), c.combination_id, c.point_label)
                 for c in choices)


def _better(obj_a: float, key_a: tuple, obj_b: float, key_b: tuple) -> bool:
    """Is (obj_a, key_a) preferable?  Objectives tied within tolerance fall
    through to the structural key (realizing the 6-over-8 convention)."""
    tol = OBJ_TIE_TOL * max(1.0, abs(obj_a), abs(obj_b))
    if obj_a < obj_b - tol:
        return True
    if obj_a > obj_b + tol:
        return False
    return key_a < key_b


def _feasible_points(params: PeriodParams) -> list[Candidate]:
    return [c for c in enumerate_candidates(params) if c.status.feasible]


def solve_horizon(periods: list[PeriodParams],
                  depth_cap: int = DEFAULT_DEPTH_CAP,
                  collect_chains: bool = False
                  ) -> Plan | tuple[Plan, list[Chain]]:
    """Exhaustive extreme-point search over the horizon.

    Walks every chain of feasible per-period extreme points, scoring each by
    the horizon objective; ties break like the one-period solver, period by
    period.  With ``collect_chains`` the full enumeration table is returned
    alongside the winning plan.
    """
    n = len(periods)
    if not 1 <= n <= depth_cap:
        raise DepthExceeded(f"horizon {n} exceeds cap {depth_cap}")
    weights = (periods[-1].s1, periods[-1].s2, periods[-1].s3)
    total_t = [p.t for p in periods]
    chains: list[Chain] = []
    best: list[tuple] = []

    def rec(k: int, params_k: PeriodParams, chosen: list[Candidate],
            effs: list[PeriodParams], objs: list[float]) -> None:
        for cand in _feasible_points(params_k):
            objs.append(cand.objective)
            chosen.append(cand)
            effs.append(params_k)
            if k + 1 == n:
                g = global_objective(list(zip(objs, total_t)), cand.state,
                                     weights)
                entry = (g, tuple(chosen), tuple(effs), tuple(objs))
                if collect_chains:
                    chains.append(Chain(tuple(chosen), tuple(objs), g))
                if not best or _better(g, _tie_key(entry[1]),
                                       best[0][0], _tie_key(best[0][1])):
                    best[:] = [entry]
            else:
                nxt = effective_params(periods[k + 1],
                                       compute_buffers(cand, params_k))
                rec(k + 1, nxt, chosen, effs, objs)
            objs.pop()
            chosen.pop()
            effs.pop()

    rec(0, periods[0], [], [], [])
    if not best:
        raise ModelError("no feasible chain over the horizon")
    g, chosen, effs, objs = best[0]
    plan = Plan(chosen, effs, objs, g)
    if collect_chains:
        chains.sort(key=lambda ch: (ch.global_objective,
                                    _tie_key(ch.choices)))
        return plan, chains
    return plan


def greedy_horizon(periods: list[PeriodParams],
                   depth_cap: int = DEFAULT_DEPTH_CAP) -> Plan:
    """Myopic baseline: each period takes its own cheapest extreme point
    given realized carryovers; the terminal penalty is only reported, never
    anticipated."""
    n = len(periods)
    if not 1 <= n <= depth_cap:
        raise DepthExceeded(f"horizon {n} exceeds cap {depth_cap}")
    params_k = periods[0]
    chosen: list[Candidate] = []
    effs: list[PeriodParams] = []
    objs: list[float] = []
    for k in range(n):
        pts = _feasible_points(params_k)
        if not pts:
            raise ModelError(f"no feasible extreme point in period {k + 1}")
        cand = pts[0]
        for other in pts[1:]:
            if _better(other.objective, _tie_key((other,)),
                       cand.objective, _tie_key((cand,))):
                cand = other
        chosen.append(cand)
        effs.append(params_k)
        objs.append(cand.objective)
        if k + 1 < n:
            params_k = effective_params(periods[k + 1],
                                        compute_buffers(cand, params_k))
    weights = (periods[-1].s1, periods[-1].s2, periods[-1].s3)
    g = global_objective([(o, p.t) for o, p in zip(objs, periods)],
                         chosen[-1].state, weights)
    return Plan(tuple(chosen), tuple(effs), tuple(objs), g)
