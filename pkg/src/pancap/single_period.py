"""One-period optimum: enumerate candidates, sweep capacity, check structure.

When capacity covers the whole arrival load the zero-cost full-service
solution wins trivially; below that the optimum is the best feasible
extreme point over patterns 6-16.  The optimal pattern moves through a
fixed preference order as capacity grows (one order per COVID-majority
regime), and the optimal cost is piecewise linear in capacity; both facts
are exposed here as checkable verdicts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .combinations import (
    CATALOG,
    Candidate,
    FEASIBLE,
    SingularSystem,
    enumerate_extreme_points,
)
from .model import Allocation, ModelError, PeriodParams, StationaryState

# Preference orders (left column: COVID majority, right: non-COVID).
PREFERENCE_COVID = (16, 12, 8, 14, 10, 6, 15, 11, 7, 13, 9, 1)
PREFERENCE_NONCOVID = (16, 12, 8, 15, 11, 7, 14, 10, 6, 13, 9, 1)

OBJ_TIE_TOL = 1e-9


class NoFeasibleCandidate(ModelError):
    """No combination admits a stationary solution (capacity not positive)."""


def covers_load(params: PeriodParams) -> bool:
    """Is capacity enough (to solver precision) to serve every arrival?

    Within a relative 1e-9 of the load the congested-pattern vertices all
    sit on their efficiency boundaries, so that band belongs to the
    full-service regime as well.
    """
    return params.gamma >= params.lam - 1e-9 * max(1.0, params.lam)


@dataclass(frozen=True)
class SweepRecord:
    gamma: float
    optimal: Candidate
    feasible_ids: frozenset[int]
    objective: float


def full_service_candidate(params: PeriodParams) -> Candidate:
    """Zero-cost solution when capacity covers the load: match every flow.

    Patterns 1-5 are all feasible and cost zero in this regime; pattern 1
    (everything fully efficient) is the canonical representative.  In the
    sub-ulp band just below the load the allocation is scaled down to keep
    the capacity constraint exact.
    """
    pr = params
    scale = min(1.0, pr.gamma / pr.lam) if pr.lam > 0 else 1.0
    alloc = Allocation(scale * pr.lambda1,
                       scale * ((1 - pr.p) * pr.lambda2 + pr.lambda3),
                       scale * pr.p * pr.lam2c,
                       scale * pr.p * pr.lam2n)
    state = StationaryState(0, 0, 0, 0, 0, 0, 0, 0, 1.0, 1.0, 1.0, 1.0, 1.0)
    return Candidate(1, "a", alloc, state, 0.0, FEASIBLE)


def _tie_key(cand: Candidate) -> tuple:
    # More fully served slots first, then lower id, then label.
    return (-cand.full_slots(), cand.combination_id, cand.point_label)


def enumerate_candidates(params: PeriodParams,
                         tol: float = 1e-9) -> list[Candidate]:
    """Every extreme point of patterns 6-16 plus the full-service solution
    when it applies; singular combinations are skipped (reported by solve)."""
    out: list[Candidate] = []
    if covers_load(params):
        out.append(full_service_candidate(params))
    for cid in range(6, 17):
        try:
            out.extend(enumerate_extreme_points(CATALOG[cid], params, tol))
        except SingularSystem:
            continue
    return out


def solve(params: PeriodParams, tol: float = 1e-9) -> Candidate:
    """Minimum-cost feasible candidate for one period.

    Ties within ``OBJ_TIE_TOL`` go to the candidate with more fully served
    slots, then the lower combination id (this realizes the convention that
    id 6 beats the capacity-shuffled id 8 twin), then the point label.
    """
    if params.gamma < 0 or (params.gamma <= 0 and params.lam > 0):
        raise NoFeasibleCandidate("total capacity must be positive")
    if covers_load(params):
        return full_service_candidate(params)
    feas = [c for c in enumerate_candidates(params, tol) if c.status.feasible]
    if not feas:
        raise NoFeasibleCandidate(
            f"no feasible extreme point at gamma={params.gamma}")
    best_obj = min(c.objective for c in feas)
    tie_tol = OBJ_TIE_TOL * max(1.0, abs(best_obj))
    pool = [c for c in feas if c.objective <= best_obj + tie_tol]
    return min(pool, key=_tie_key)


def capacity_sweep(params: PeriodParams, gammas) -> list[SweepRecord]:
    """Solve across a strictly increasing capacity grid."""
    gam = [float(g) for g in gammas]
    if any(g <= 0 for g in gam) or any(b <= a for a, b in zip(gam, gam[1:])):
        raise ValueError("capacity grid must be positive, strictly increasing")
    records = []
    for g in gam:
        p = params if params.gamma == g else _with_gamma(params, g)
        cands = enumerate_candidates(p)
        ids = {c.combination_id for c in cands if c.status.feasible}
        if covers_load(p):
            ids |= {1, 2, 3, 4, 5}
        opt = solve(p)
        records.append(SweepRecord(g, opt, frozenset(ids), opt.objective))
    return records


def _with_gamma(params: PeriodParams, gamma: float) -> PeriodParams:
    from dataclasses import replace
    return replace(params, gamma=gamma)


def feasibility_intervals(records: list[SweepRecord]) -> dict[int, tuple]:
    """Per combination, the (first, last) grid capacity where it is feasible."""
    out: dict[int, tuple] = {}
    for rec in records:
        for cid in rec.feasible_ids:
            lo, hi = out.get(cid, (rec.gamma, rec.gamma))
            out[cid] = (min(lo, rec.gamma), max(hi, rec.gamma))
    return out


@dataclass(frozen=True)
class OrderVerdict:
    passed: bool
    order: tuple[int, ...]
    sequence: tuple[int, ...]
    violation_index: int | None = None
    detail: str = ""


def check_preference_order(records: list[SweepRecord],
                           p_covid: float) -> OrderVerdict:
    """Is the deduplicated optimal-id path a subsequence of the fixed order?"""
    order = PREFERENCE_COVID if p_covid > 0.5 else PREFERENCE_NONCOVID
    seq: list[int] = []
    for rec in records:
        cid = rec.optimal.combination_id
        if not seq or seq[-1] != cid:
            seq.append(cid)
    pos = 0
    for i, cid in enumerate(seq):
        while pos < len(order) and order[pos] != cid:
            pos += 1
        if pos == len(order):
            return OrderVerdict(False, order, tuple(seq), i,
                                f"combination {cid} out of order at step {i}")
        pos += 1
    return OrderVerdict(True, order, tuple(seq))


@dataclass(frozen=True)
class Breakpoint:
    gamma: float
    id_change: bool
    second_difference: float


@dataclass(frozen=True)
class PiecewiseReport:
    breakpoints: list[Breakpoint]
    segment_ids: list[int]
    max_affine_deviation: list[float]

    @property
    def max_deviation(self) -> float:
        return max(self.max_affine_deviation, default=0.0)


def check_piecewise_linear(records: list[SweepRecord],
                           tol: float = 1e-7) -> PiecewiseReport:
    """Detect slope breaks of the cost curve and test per-id affinity.

    Requires a uniform grid.  Each maximal run of records with the same
    optimal combination is fitted by the secant through its endpoints; the
    report carries the worst deviation per run.  Breakpoints are grid points
    whose centered second difference exceeds ``tol`` (scaled by the step).
    """
    if len(records) < 3:
        return PiecewiseReport([], [r.optimal.combination_id
                                    for r in records], [])
    g = np.array([r.gamma for r in records])
    steps = np.diff(g)
    if not np.allclose(steps, steps[0], rtol=1e-9, atol=1e-12):
        raise ValueError("piecewise check needs a uniform capacity grid")
    obj = np.array([r.objective for r in records])
    ids = [r.optimal.combination_id for r in records]
    second = obj[:-2] - 2 * obj[1:-1] + obj[2:]
    breaks = []
    for i, d2 in enumerate(second, start=1):
        if abs(d2) > tol:
            breaks.append(Breakpoint(float(g[i]), ids[i] != ids[i - 1]
                                     or ids[i + 1] != ids[i], float(d2)))
    seg_ids: list[int] = []
    seg_dev: list[float] = []
    start = 0
    for i in range(1, len(records) + 1):
        if i == len(records) or ids[i] != ids[start]:
            seg_ids.append(ids[start])
            lo, hi = start, i - 1
            if hi > lo:
                span = g[hi] - g[lo]
                fit = obj[lo] + (obj[hi] - obj[lo]) * (g[lo:hi + 1] - g[lo]) / span
                seg_dev.append(float(np.max(np.abs(obj[lo:hi + 1] - fit))))
            else:
                seg_dev.append(0.0)
            start = i
    return PiecewiseReport(breaks, seg_ids, seg_dev)
