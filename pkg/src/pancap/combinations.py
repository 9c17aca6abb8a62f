"""Catalog of the 16 admissible efficiency patterns and their candidates.

Each stationary solution is classified by whether every (queue, severity)
pair is shut out, congested at its threshold length, or served at full
efficiency.  Priority at the ED rules out most of the 3^5 patterns and
leaves 16.  Patterns 9-16 reduce to small linear equality systems whose
vertices are the only optima worth checking; patterns 6-8 are nonlinear but
collapse to a single candidate once the dominated clinic is shut (its
traffic is cheaper to serve at the low-priority ED, which stops the
deterioration flow out of the clinic queue).  Patterns 1-5 only exist when
capacity covers the whole load and are handled by the period solver.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .model import (
    Allocation,
    ModelError,
    PeriodParams,
    StationaryState,
    period_objective,
)

DEFAULT_TOL = 1e-9


class Slot(Enum):
    """Efficiency regime of one (queue, severity) pair."""

    ZERO = "zero"      # shut out: no service for this class
    PART = "partial"   # congested: efficiency in [0, 1), queue at threshold
    FULL = "full"      # everyone of this class is served


Z, P, F = Slot.ZERO, Slot.PART, Slot.FULL


@dataclass(frozen=True)
class Combination:
    id: int
    pattern: tuple[Slot, Slot, Slot, Slot, Slot]  # (a_e1, a_e2, a_e3, a_c, a_n)


CATALOG: dict[int, Combination] = {
    cid: Combination(cid, pat) for cid, pat in {
        1:  (F, F, F, F, F),
        2:  (F, F, F, P, F),
        3:  (F, F, F, F, P),
        4:  (F, F, F, P, P),
        5:  (F, P, F, F, F),
        6:  (F, P, F, P, F),
        7:  (F, P, F, F, P),
        8:  (F, P, F, P, P),
        9:  (F, Z, P, F, F),
        10: (F, Z, P, P, F),
        11: (F, Z, P, F, P),
        12: (F, Z, P, P, P),
        13: (P, Z, Z, F, F),
        14: (P, Z, Z, P, F),
        15: (P, Z, Z, F, P),
        16: (P, Z, Z, P, P),
    }.items()
}

# Vertex budget per combination (square systems have one, each extra free
# capacity dimension doubles the tight-set choices; 6-8 collapse to one).
MAX_POINTS = {1: 1, 2: 1, 3: 1, 4: 1, 5: 1, 6: 1, 7: 1, 8: 1,
              9: 1, 10: 2, 11: 2, 12: 3, 13: 1, 14: 2, 15: 2, 16: 3}

_LABELS = "abc"


class Unclassifiable(ModelError):
    """State violates the ED priority structure beyond tolerance."""


class NotReduced(ModelError):
    """Patterns 1-5 have no reduced system; the period solver owns them."""


class SingularSystem(ModelError):
    """A square candidate system is rank deficient for these parameters."""


@dataclass(frozen=True)
class Status:
    kind: str                 # "feasible" | "boundary" | "infeasible"
    reason: str = ""
    to_id: int | None = None  # dominating combination for boundary points

    @property
    def feasible(self) -> bool:
        return self.kind == "feasible"


FEASIBLE = Status("feasible")


@dataclass(frozen=True)
class Candidate:
    """One extreme point: where it came from and what it looks like."""

    combination_id: int
    point_label: str
    alloc: Allocation
    state: StationaryState
    objective: float
    status: Status
    tight: tuple[str, ...] = ()

    @property
    def label(self) -> str:
        if MAX_POINTS.get(self.combination_id, 1) == 1:
            return str(self.combination_id)
        return f"{self.combination_id}_{self.point_label}"

    def full_slots(self) -> int:
        return sum(1 for s in CATALOG[self.combination_id].pattern
                   if s is Slot.FULL)


def classify(state: StationaryState, tol: float = 1e-6) -> Combination:
    """Map a stationary state to the unique pattern it belongs to.

    Efficiencies are compared against {0, 1} with tolerance ``tol``; the
    half-open "congested" ranges include zero.  Raises Unclassifiable when
    the state contradicts ED priority (a busy low-priority queue under a
    congested high-priority one, or partial s2 service without full s3
    service).
    """
    a1, a2, a3, ac, an = state.efficiencies()

    def is_one(a):
        return a >= 1 - tol

    def is_zero(a):
        return a <= tol

    if a1 > 1 + tol or a2 > 1 + tol or a3 > 1 + tol or ac > 1 + tol or an > 1 + tol:
        raise Unclassifiable("efficiency above 1")
    clinic = (Slot.FULL if is_one(ac) else Slot.PART,
              Slot.FULL if is_one(an) else Slot.PART)
    if not is_one(a1):
        if not (is_zero(a2) and is_zero(a3)):
            raise Unclassifiable("congested HPED with active LPED")
        base = {(F, F): 13, (P, F): 14, (F, P): 15, (P, P): 16}
    elif is_one(a2):
        if not is_one(a3):
            raise Unclassifiable("full s2 service without full s3 service")
        base = {(F, F): 1, (P, F): 2, (F, P): 3, (P, P): 4}
    elif not is_zero(a2) or is_one(a3):
        # Partial s2 forces full s3; the a2 == 0, a3 == 1 edge also lands
        # here (zero is inside the congested range of patterns 5-8).
        if not is_one(a3):
            raise Unclassifiable("partial s2 service without full s3 service")
        base = {(F, F): 5, (P, F): 6, (F, P): 7, (P, P): 8}
    else:
        base = {(F, F): 9, (P, F): 10, (F, P): 11, (P, P): 12}
    return CATALOG[base[clinic]]


@dataclass(frozen=True)
class LinearSystem:
    """Reduced equality system of one combination plus its vertex recipe.

    ``a @ x = b`` over variables ``variables``; extreme points arise by
    forcing ``n_tight`` of the ``tightable`` coordinates to zero and solving
    the resulting square system.  Patterns 6-8 are pre-eliminated to the
    two-variable form (stored mass of the partially served class, and the
    rate of that class actually served).
    """

    combination_id: int
    variables: tuple[str, ...]
    a: np.ndarray
    b: np.ndarray
    tightable: tuple[str, ...]
    n_tight: int

    @property
    def shape(self) -> tuple[int, int]:
        return (self.a.shape[0], len(self.variables))

    def tight_sets(self) -> list[tuple[str, ...]]:
        return [tuple(c) for c in
                itertools.combinations(self.tightable, self.n_tight)]


_HIGH_VARS = ("mu_e1", "mu_e23", "mu_c", "mu_n", "h1", "h2c", "h2n", "h3")
_LOW_VARS = ("mu_e1", "mu_c", "mu_n", "h1", "h2c", "h2n", "h3")


def _clinic_slots(comb: Combination) -> tuple[Slot, Slot]:
    return comb.pattern[3], comb.pattern[4]


def assemble_system(comb: Combination, params: PeriodParams) -> LinearSystem:
    """Reduced equality system for combination ``comb`` (ids 6-16).

    For ids 9-16 the unknowns are the four service rates (three when the
    high-priority ED is congested, which forces the low-priority ED shut)
    and the four repository masses; rows are the full-efficiency flow
    matches, the repository balances with the congested-queue efficiencies
    substituted out, and the capacity identity.  For ids 6-8 the dominated
    clinic is fixed shut and the bilinear terms eliminate to a 2x2 system.
    """
    if comb.id in (6, 7, 8):
        return _assemble_partial_s2(comb, params)
    if not 9 <= comb.id <= 16:
        raise NotReduced(f"combination {comb.id} has no reduced system")

    pr = params
    high = comb.id <= 12
    names = _HIGH_VARS if high else _LOW_VARS
    ix = {n: i for i, n in enumerate(names)}
    c_slot, n_slot = _clinic_slots(comb)
    rows: list[np.ndarray] = []
    rhs: list[float] = []

    def row(coeffs: dict[str, float], b: float) -> None:
        r = np.zeros(len(names))
        for name, v in coeffs.items():
            r[ix[name]] = v
        rows.append(r)
        rhs.append(b)

    # Congested clinics sit at their threshold lengths, feeding the s2->s1
    # deterioration flow into the high-priority ED; full clinics are empty.
    qc_coeff = pr.tau_c * pr.delta21 if c_slot is P else 0.0
    qn_coeff = pr.tau_n * pr.delta21 if n_slot is P else 0.0

    if high:
        # HPED at full efficiency: service matches its total inflow.
        row({"mu_e1": 1.0, "h1": -pr.beta1, "mu_c": -qc_coeff,
             "mu_n": -qn_coeff}, pr.lambda1)
        # Severity-1 repository: evolution in, fixed outflow.
        row({"h2c": pr.delta21, "h2n": pr.delta21, "h1": -pr.d1_out}, 0.0)
    else:
        # Congested HPED: repository balance with the spill (inflow - mu_e1)
        # substituted in.
        row({"mu_e1": -1.0, "h1": pr.beta1 - pr.d1_out,
             "mu_c": qc_coeff, "mu_n": qn_coeff,
             "h2c": pr.delta21, "h2n": pr.delta21}, -pr.lambda1)

    evo_c = pr.p_covid
    evo_n = 1.0 - pr.p_covid
    if c_slot is F:
        row({"mu_c": 1.0, "h2c": -pr.beta2}, pr.lam2c)
        row({"h1": evo_c * pr.delta12, "h3": evo_c * pr.delta32,
             "h2c": -pr.d2_out}, 0.0)
    else:
        row({"mu_c": -1.0, "h2c": pr.beta2 - pr.d2_out,
             "h1": evo_c * pr.delta12, "h3": evo_c * pr.delta32}, -pr.lam2c)
    if n_slot is F:
        row({"mu_n": 1.0, "h2n": -pr.beta2}, pr.lam2n)
        row({"h1": evo_n * pr.delta12, "h3": evo_n * pr.delta32,
             "h2n": -pr.d2_out}, 0.0)
    else:
        row({"mu_n": -1.0, "h2n": pr.beta2 - pr.d2_out,
             "h1": evo_n * pr.delta12, "h3": evo_n * pr.delta32}, -pr.lam2n)

    h3_row = {"h3": pr.beta3 - pr.d3_out, "h2c": pr.delta23,
              "h2n": pr.delta23}
    if high:
        h3_row["mu_e23"] = -1.0
    row(h3_row, -pr.lambda3)

    row({n: 1.0 for n in names if n.startswith("mu_")}, pr.gamma)

    # Vertices lie where capacity is withheld from partially served queues.
    tight = ["mu_e23"] if high else ["mu_e1"]
    if c_slot is P:
        tight.append("mu_c")
    if n_slot is P:
        tight.append("mu_n")
    a = np.vstack(rows)
    n_tight = len(names) - len(rows)
    return LinearSystem(comb.id, names, a, np.array(rhs), tuple(tight),
                        n_tight)


def _evo_gain(pr: PeriodParams) -> float:
    """Mass gain of the s2 repositories per unit of total s2 repository mass
    through the s3 and s1 detours (both legs fully served variants)."""
    g = 0.0
    if pr.d3_out > 0:
        g += pr.delta32 * pr.delta23 / pr.d3_out
    if pr.d1_out > 0:
        g += pr.delta12 * pr.delta21 / pr.d1_out
    return g


def _assemble_partial_s2(comb: Combination,
                         params: PeriodParams) -> LinearSystem:
    """Linearized candidate system for ids 6-8 (partial s2 at the LPED).

    At optimality the congested clinic is shut, so every class except one
    s2 stream is fully served.  Unknowns: ``stored`` (repository mass of the
    partially served s2 stream; total of both streams for id 8) and
    ``served`` (rate of that stream admitted at the low-priority ED).
    """
    pr = params
    if pr.d1_out <= 0 or pr.d2_out <= 0 or pr.d3_out <= 0:
        raise SingularSystem(
            f"combination {comb.id}: zero repository outflow rate")
    k = _evo_gain(pr)
    carry1 = pr.beta1 * pr.delta21 / pr.d1_out   # beta flow of H1 per unit S2
    carry3 = pr.beta3 * pr.delta23 / pr.d3_out
    if comb.id == 6:
        lam_part, evo_share = pr.lam2c, pr.p_covid
        lam_rest = pr.lambda1 + pr.lambda3 + pr.lam2n
    elif comb.id == 7:
        lam_part, evo_share = pr.lam2n, 1.0 - pr.p_covid
        lam_rest = pr.lambda1 + pr.lambda3 + pr.lam2c
    else:
        lam_part, evo_share = pr.lambda2, 1.0
        lam_rest = pr.lambda1 + pr.lambda3
    # Fraction of the total s2 repository mass held by the fully served
    # stream (its only inflow is severity evolution).
    other = (1.0 - evo_share) * k / pr.d2_out if comb.id in (6, 7) else 0.0
    if other >= 1.0:
        raise SingularSystem(f"combination {comb.id}: evolution feedback "
                             "exceeds repository outflow")
    # stored -> total-of-both-streams multiplier
    blow = 1.0 / (1.0 - other)
    a = np.array([
        # Balance of the partially served stream's repository.
        [pr.beta2 + evo_share * k * blow - pr.d2_out, -1.0],
        # Capacity: re-entry flows of the fully served classes plus the
        # partially served s2 rate (exogenous arrivals sit on the rhs).
        [(carry1 + carry3) * blow + pr.beta2 * (blow - 1.0), 1.0],
    ])
    b = np.array([-lam_part, pr.gamma - lam_rest])
    return LinearSystem(comb.id, ("stored", "served"), a, b, (), 0)


def _alpha(mu: float, inflow: float, tol: float) -> float | None:
    """Service fraction mu/inflow; None marks an impossible configuration."""
    if inflow <= tol:
        return 0.0 if mu <= tol else None
    return mu / inflow


def _point_from_solution(comb: Combination, params: PeriodParams,
                         x: dict[str, float], label: str,
                         tight: tuple[str, ...], tol: float) -> Candidate:
    """Assemble a Candidate for ids 9-16 from a solved variable vector."""
    pr = params
    high = comb.id <= 12
    c_slot, n_slot = _clinic_slots(comb)
    mu_e1 = x["mu_e1"]
    mu_e23 = x.get("mu_e23", 0.0)
    mu_c, mu_n = x["mu_c"], x["mu_n"]
    h1, h2c, h2n, h3 = x["h1"], x["h2c"], x["h2n"], x["h3"]

    problems = [name for name, v in x.items() if v < -tol]
    # Tiny negative round-off is clipped, genuine negatives are infeasible.
    mu_e1, mu_e23, mu_c, mu_n = (max(v, 0.0) for v in
                                 (mu_e1, mu_e23, mu_c, mu_n))
    h1, h2c, h2n, h3 = (max(v, 0.0) for v in (h1, h2c, h2n, h3))

    q_c = mu_c * pr.tau_c if c_slot is P else 0.0
    q_n = mu_n * pr.tau_n if n_slot is P else 0.0
    a_c = 1.0 if c_slot is F else _alpha(mu_c, pr.lam2c + pr.beta2 * h2c, tol)
    a_n = 1.0 if n_slot is F else _alpha(mu_n, pr.lam2n + pr.beta2 * h2n, tol)
    if high:
        a_e1, q_e1 = 1.0, 0.0
        a_e3 = _alpha(mu_e23, pr.lambda3 + pr.beta3 * h3, tol)
        q_e23 = mu_e23 * pr.tau_e3
    else:
        inflow1 = pr.lambda1 + pr.beta1 * h1 + (q_c + q_n) * pr.delta21
        a_e1 = _alpha(mu_e1, inflow1, tol)
        q_e1 = mu_e1 * pr.tau_e1
        a_e3, q_e23 = 0.0, 0.0

    status = FEASIBLE
    if problems:
        status = Status("infeasible", "negative " + ", ".join(problems))
    alphas = {"a_e1": a_e1, "a_e3": a_e3, "a_c": a_c, "a_n": a_n}
    partial = {"a_e1": comb.pattern[0], "a_e3": comb.pattern[2],
               "a_c": c_slot, "a_n": n_slot}
    for name, val in alphas.items():
        if val is None:
            status = Status("infeasible", f"{name} undefined (service with "
                                          "no inflow)")
            alphas[name] = 0.0
        elif partial[name] is P and status.feasible:
            if val > 1 + tol:
                status = Status("infeasible", f"{name} > 1")
            elif val >= 1 - tol:
                status = Status("boundary", f"{name} reached 1")
    state = StationaryState(q_e1, q_e23, q_c, q_n, h1, h2c, h2n, h3,
                            min(alphas["a_e1"], 1.0), 0.0,
                            min(alphas["a_e3"], 1.0),
                            min(alphas["a_c"], 1.0), min(alphas["a_n"], 1.0))
    cand = Candidate(comb.id, label, Allocation(mu_e1, mu_e23, mu_c, mu_n),
                     state, period_objective(state, pr), status, tight)
    if status.kind == "boundary":
        cand = reassign_boundary(cand, tol)
    return cand


def _solve_partial_s2(comb: Combination, params: PeriodParams,
                      tol: float) -> Candidate:
    """Single candidate for ids 6-8 via the eliminated 2x2 system."""
    pr = params
    sysm = _assemble_partial_s2(comb, params)
    try:
        stored, served = np.linalg.solve(sysm.a, sysm.b)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(f"combination {comb.id}: {exc}") from None

    k = _evo_gain(pr)
    if comb.id == 6:
        h2c = stored
        s2 = stored / (1.0 - (1 - pr.p_covid) * k / pr.d2_out)
        h2n = s2 - h2c
        attempt = pr.lam2c + pr.beta2 * h2c
    elif comb.id == 7:
        h2n = stored
        s2 = stored / (1.0 - pr.p_covid * k / pr.d2_out)
        h2c = s2 - h2n
        attempt = pr.lam2n + pr.beta2 * h2n
    else:
        s2 = stored
        attempt = pr.lambda2 + pr.beta2 * s2
    a_e2 = _alpha(served, attempt, tol)
    if comb.id == 8:
        # Split the pooled repository mass by each stream's own balance.
        a2v = 0.0 if a_e2 is None else a_e2
        denom = pr.d2_out - pr.beta2 * (1 - a2v)
        evo = k * s2
        if denom <= tol:
            raise SingularSystem("combination 8: repository split degenerate")
        h2c = (pr.lam2c * (1 - a2v) + pr.p_covid * evo) / denom
        h2n = s2 - h2c
    h1 = pr.delta21 * s2 / pr.d1_out
    h3 = pr.delta23 * s2 / pr.d3_out

    mu_e1 = pr.lambda1 + pr.beta1 * h1
    a2v = 0.0 if a_e2 is None else min(a_e2, 1.0)
    if comb.id == 6:
        mu_n = (pr.p + (1 - pr.p) * (1 - a2v)) * (pr.lam2n + pr.beta2 * h2n)
        mu_c = 0.0
    elif comb.id == 7:
        mu_c = (pr.p + (1 - pr.p) * (1 - a2v)) * (pr.lam2c + pr.beta2 * h2c)
        mu_n = 0.0
    else:
        mu_c = mu_n = 0.0
    mu_e23 = pr.gamma - mu_e1 - mu_c - mu_n

    status = FEASIBLE
    if a_e2 is None:
        status = Status("infeasible", "a_e2 undefined (service with no inflow)")
    elif a_e2 > 1 + tol:
        status = Status("infeasible", "a_e2 > 1")
    elif a_e2 >= 1 - tol:
        status = Status("boundary", "a_e2 reached 1")
    elif a_e2 < -tol:
        status = Status("infeasible", "a_e2 < 0")
    for name, v in (("h1", h1), ("h2c", h2c), ("h2n", h2n), ("h3", h3),
                    ("mu_e23", mu_e23), ("mu_n", mu_n), ("mu_c", mu_c)):
        if v < -tol and status.feasible:
            status = Status("infeasible", f"negative {name}")
    state = StationaryState(
        0.0, max(mu_e23, 0.0) * pr.tau_e2, 0.0, 0.0,
        max(h1, 0.0), max(h2c, 0.0), max(h2n, 0.0), max(h3, 0.0),
        1.0, max(min(a2v, 1.0), 0.0), 1.0,
        0.0 if comb.id in (6, 8) else 1.0,
        0.0 if comb.id in (7, 8) else 1.0)
    alloc = Allocation(mu_e1, max(mu_e23, 0.0), mu_c, mu_n)
    cand = Candidate(comb.id, "a", alloc, state,
                     period_objective(state, pr), status)
    if status.kind == "boundary":
        cand = reassign_boundary(cand, tol)
    return cand


def enumerate_extreme_points(comb: Combination, params: PeriodParams,
                             tol: float = DEFAULT_TOL) -> list[Candidate]:
    """All extreme-point candidates of one combination, labelled a/b/c.

    Labels follow the lexicographic order of the tight variable sets in
    allocation order (mu_e1, mu_e23, mu_c, mu_n); published tables use their
    own unspecified labels, so fixtures must match points by allocation or
    objective, never by label.
    """
    if comb.id in (6, 7, 8):
        return [_solve_partial_s2(comb, params, tol)]
    sysm = assemble_system(comb, params)
    points: list[Candidate] = []
    for i, tight in enumerate(sysm.tight_sets()):
        label = _LABELS[i]
        a_rows = [sysm.a]
        b_rows = [sysm.b]
        for name in tight:
            unit = np.zeros(len(sysm.variables))
            unit[sysm.variables.index(name)] = 1.0
            a_rows.append(unit[None, :])
            b_rows.append(np.array([0.0]))
        a = np.vstack(a_rows)
        b = np.concatenate(b_rows)
        try:
            x = np.linalg.solve(a, b)
        except np.linalg.LinAlgError:
            raise SingularSystem(
                f"combination {comb.id}, tight set {tight} is rank deficient")
        sol = dict(zip(sysm.variables, x))
        for name in tight:
            sol[name] = 0.0
        points.append(_point_from_solution(comb, params, sol, label,
                                           tight, tol))
    return points


def reassign_boundary(cand: Candidate, tol: float = DEFAULT_TOL) -> Candidate:
    """Relabel a candidate whose congested slot landed exactly on 1.

    Half-open congestion ranges cannot be enforced in floating point; a
    partially-served class that came out fully served belongs to the
    dominating pattern with that slot full and an empty queue.  Id 8 with a
    fully served non-COVID clinic folds into id 6 (the convention that
    prefers more working facilities).
    """
    comb = CATALOG[cand.combination_id]
    st = cand.state
    effs = list(st.efficiencies())
    queues = [st.q_e1, st.q_e23, st.q_c, st.q_n]
    qix = {0: 0, 3: 2, 4: 3}   # efficiency slot -> queue index
    hit = False
    for i, (slot, a) in enumerate(zip(comb.pattern, effs)):
        if slot is P and a >= 1 - tol:
            effs[i] = 1.0
            if i in qix:
                queues[qix[i]] = 0.0
            hit = True
    if not hit:
        return cand
    new_state = StationaryState(queues[0], queues[1], queues[2], queues[3],
                                st.h1, st.h2c, st.h2n, st.h3, *effs)
    try:
        target = classify(new_state, max(tol, 1e-9))
    except Unclassifiable:
        return replace(cand, status=Status(
            "infeasible", "boundary state not classifiable"))
    return replace(cand, state=new_state,
                   status=Status("boundary", cand.status.reason, target.id))
