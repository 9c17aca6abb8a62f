"""Core fluid model: parameters, stationary states, flow balances, period cost.

The network has four service queues (high-priority ED, low-priority ED, a
COVID clinic and a non-COVID clinic) plus four repositories holding patients
who balked.  Patients arrive in three severity classes, join a queue only if
its length is below their severity-specific tolerance threshold, and may
re-enter, deteriorate, recover, leave for good or die while waiting outside.

Everything in this module is a pure function over immutable values, so it is
safe to call from any number of workers.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace

import numpy as np


class ModelError(Exception):
    """Base class for model-level failures."""


class MissingThresholds(ModelError):
    """Neither explicit wait tolerances nor (reward_B, phi) were supplied."""


class InvariantViolation(ModelError):
    """A parameter or state invariant failed; carries the predicate name."""

    def __init__(self, predicate: str, detail: str = ""):
        self.predicate = predicate
        super().__init__(predicate if not detail else f"{predicate}: {detail}")


@dataclass(frozen=True)
class PeriodParams:
    """Exogenous description of one planning period.

    Wait tolerances can be given directly (tau_*) or derived from a service
    reward ``reward_B`` and clinic indifference factor ``phi``:
    ``tau_ei = B / (r + s_i)`` and ``tau_c = tau_n = B / (phi * s2)``.
    Call :func:`validate_params` to fill in derived fields and check
    invariants before handing an instance to the solver.
    """

    lambda1: float
    lambda2: float
    lambda3: float
    s1: float
    s2: float
    s3: float
    p: float
    p_covid: float
    r: float
    gamma: float
    delta10: float = 0.0
    delta12: float = 0.0
    delta21: float = 0.0
    delta23: float = 0.0
    delta32: float = 0.0
    delta34: float = 0.0
    beta1: float = 0.0
    beta2: float = 0.0
    beta3: float = 0.0
    sigma1: float = 0.0
    sigma2: float = 0.0
    sigma3: float = 0.0
    t: float = 1.0
    reward_B: float | None = None
    phi: float | None = None
    tau_e1: float | None = None
    tau_e2: float | None = None
    tau_e3: float | None = None
    tau_c: float | None = None
    tau_n: float | None = None
    # Weight on the death outflow h1*delta10 in the period cost.  The model
    # fixes this to 1; it is exposed for sensitivity studies only.
    death_weight: float = 1.0

    @property
    def lam(self) -> float:
        return self.lambda1 + self.lambda2 + self.lambda3

    @property
    def lam2c(self) -> float:
        return self.lambda2 * self.p_covid

    @property
    def lam2n(self) -> float:
        return self.lambda2 * (1.0 - self.p_covid)

    @property
    def d1_out(self) -> float:
        """Total outflow rate from the severity-1 repository."""
        return self.sigma1 + self.delta12 + self.delta10 + self.beta1

    @property
    def d2_out(self) -> float:
        """Total outflow rate from either severity-2 repository."""
        return self.sigma2 + self.delta23 + self.delta21 + self.beta2

    @property
    def d3_out(self) -> float:
        """Total outflow rate from the severity-3 repository."""
        return self.delta32 + self.delta34 + self.sigma3 + self.beta3


@dataclass(frozen=True)
class Allocation:
    """Service-rate split of the total capacity over the four queues."""

    mu_e1: float
    mu_e23: float
    mu_c: float
    mu_n: float

    @property
    def total(self) -> float:
        return self.mu_e1 + self.mu_e23 + self.mu_c + self.mu_n

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.mu_e1, self.mu_e23, self.mu_c, self.mu_n)


@dataclass(frozen=True)
class StationaryState:
    """Queue lengths, repository masses and efficiencies at equilibrium."""

    q_e1: float
    q_e23: float
    q_c: float
    q_n: float
    h1: float
    h2c: float
    h2n: float
    h3: float
    a_e1: float
    a_e2: float
    a_e3: float
    a_c: float
    a_n: float

    def masses(self) -> tuple[float, ...]:
        return (self.q_e1, self.q_e23, self.q_c, self.q_n,
                self.h1, self.h2c, self.h2n, self.h3)

    def efficiencies(self) -> tuple[float, float, float, float, float]:
        return (self.a_e1, self.a_e2, self.a_e3, self.a_c, self.a_n)


ZERO_STATE = StationaryState(0, 0, 0, 0, 0, 0, 0, 0, 1.0, 1.0, 1.0, 1.0, 1.0)

_RATE_FIELDS = (
    "lambda1", "lambda2", "lambda3", "r", "gamma",
    "delta10", "delta12", "delta21", "delta23", "delta32", "delta34",
    "beta1", "beta2", "beta3", "sigma1", "sigma2", "sigma3",
)


def derive_thresholds(reward_B: float, phi: float, r: float,
                      s: tuple[float, float, float]) -> tuple[float, ...]:
    """Wait tolerances implied by a service reward and indifference factor.

    ED classes tolerate ``B / (r + s_i)``; both clinics share
    ``B / (phi * s2)`` since only medium-severity patients use them.
    """
    s1, s2, s3 = s
    tau_e = tuple(reward_B / (r + si) for si in (s1, s2, s3))
    tau_cn = reward_B / (phi * s2)
    return (*tau_e, tau_cn, tau_cn)


def validate_params(raw: PeriodParams) -> PeriodParams:
    """Normalize a parameter set: fill thresholds, enforce invariants.

    Raises :class:`MissingThresholds` if neither the five tau values nor
    (reward_B, phi) are present, and :class:`InvariantViolation` naming the
    first failed predicate otherwise.
    """
    taus = (raw.tau_e1, raw.tau_e2, raw.tau_e3, raw.tau_c, raw.tau_n)
    if any(v is None for v in taus):
        if raw.reward_B is None or raw.phi is None:
            raise MissingThresholds(
                "supply tau_e1..tau_e3, tau_c, tau_n or (reward_B, phi)")
        tau_e1, tau_e2, tau_e3, tau_c, tau_n = derive_thresholds(
            raw.reward_B, raw.phi, raw.r, (raw.s1, raw.s2, raw.s3))
        raw = replace(raw, tau_e1=tau_e1, tau_e2=tau_e2, tau_e3=tau_e3,
                      tau_c=tau_c, tau_n=tau_n)

    for name in _RATE_FIELDS:
        if getattr(raw, name) < 0:
            raise InvariantViolation(f"{name} >= 0")
    for name in ("p", "p_covid"):
        v = getattr(raw, name)
        if not 0.0 <= v <= 1.0:
            raise InvariantViolation(f"{name} in [0,1]")
    if not (1.0 > raw.s1 > raw.s2 > raw.s3 > 0.0):
        if not raw.s1 < 1.0:
            raise InvariantViolation("s1 < 1")
        if not raw.s1 > raw.s2:
            raise InvariantViolation("s1 > s2")
        if not raw.s2 > raw.s3:
            raise InvariantViolation("s2 > s3")
        raise InvariantViolation("s3 > 0")
    if raw.phi is not None and raw.phi > 1.0:
        raise InvariantViolation("phi <= 1")
    eps = 1e-12
    if not (raw.tau_e1 <= raw.tau_e2 + eps and raw.tau_e2 <= raw.tau_e3 + eps):
        raise InvariantViolation("tau_e1 <= tau_e2 <= tau_e3")
    for tau in ("tau_e1", "tau_e2", "tau_e3", "tau_c", "tau_n"):
        if getattr(raw, tau) < 0:
            raise InvariantViolation(f"{tau} >= 0")
    if raw.delta10 + raw.delta12 > 1.0 + eps:
        raise InvariantViolation("delta10 + delta12 <= 1")
    if raw.delta21 + raw.delta23 > 1.0 + eps:
        raise InvariantViolation("delta21 + delta23 <= 1")
    if raw.delta32 + raw.delta34 > 1.0 + eps:
        raise InvariantViolation("delta32 + delta34 <= 1")
    if raw.t <= 0:
        raise InvariantViolation("t > 0")
    return raw


def params_from_dict(data: dict) -> PeriodParams:
    """Build and validate a parameter set from a plain mapping."""
    known = {f.name for f in fields(PeriodParams)}
    unknown = set(data) - known
    if unknown:
        raise InvariantViolation("unknown fields", ", ".join(sorted(unknown)))
    return validate_params(PeriodParams(**data))


def flow_residuals(state: StationaryState, alloc: Allocation,
                   params: PeriodParams) -> np.ndarray:
    """Time derivatives of the eight patient masses at (state, alloc).

    Components in order: HPED queue, LPED queue, clinic queue, non-COVID
    clinic queue, then the four repositories.  A genuine stationary solution
    yields a vector that is zero to within the solver tolerance.

    The queue components write the outflow as the full service rate, which
    presumes every funded facility is kept busy; that holds at optima
    (capacity never idles below full load) but not for arbitrary slack
    allocations, where only the four repository components are meaningful.
    """
    pr = params
    st = state
    pc = pr.p_covid
    inflow1 = pr.lambda1 + pr.beta1 * st.h1 + (st.q_c + st.q_n) * pr.delta21
    a2c = pr.lam2c + pr.beta2 * st.h2c       # total covid s2 attempt rate
    a2n = pr.lam2n + pr.beta2 * st.h2n
    a3 = pr.lambda3 + pr.beta3 * st.h3
    evo2 = st.h3 * pr.delta32 + st.h1 * pr.delta12

    f_hped = inflow1 * st.a_e1 - alloc.mu_e1
    f_lped = ((1 - pr.p) * (pr.lambda2 + pr.beta2 * (st.h2c + st.h2n)) * st.a_e2
              + a3 * st.a_e3
              + pr.p * a2c * (1 - st.a_c) * st.a_e2
              + pr.p * a2n * (1 - st.a_n) * st.a_e2
              - alloc.mu_e23)
    f_c = st.a_c * (pr.p * a2c + (1 - pr.p) * a2c * (1 - st.a_e2)) - alloc.mu_c
    f_n = st.a_n * (pr.p * a2n + (1 - pr.p) * a2n * (1 - st.a_e2)) - alloc.mu_n
    f_h1 = (inflow1 * (1 - st.a_e1) + (st.h2c + st.h2n) * pr.delta21
            - st.h1 * pr.d1_out)
    f_h2c = (a2c * (1 - st.a_e2) * (1 - st.a_c) + evo2 * pc
             - st.h2c * pr.d2_out)
    f_h2n = (a2n * (1 - st.a_e2) * (1 - st.a_n) + evo2 * (1 - pc)
             - st.h2n * pr.d2_out)
    f_h3 = (a3 * (1 - st.a_e3) + pr.delta23 * (st.h2c + st.h2n)
            - st.h3 * pr.d3_out)
    return np.array([f_hped, f_lped, f_c, f_n, f_h1, f_h2c, f_h2n, f_h3])


def period_objective(state: StationaryState, params: PeriodParams) -> float:
    """Weighted rate of patients permanently lost (deaths plus defections)."""
    return (params.death_weight * state.h1 * params.delta10
            + params.s1 * params.sigma1 * state.h1
            + params.s2 * params.sigma2 * state.h2c
            + params.s2 * params.sigma2 * state.h2n
            + params.s3 * params.sigma3 * state.h3)


def check_state(state: StationaryState, alloc: Allocation,
                params: PeriodParams, tol: float = 1e-7) -> list[str]:
    """List of violated stationary-state invariants (empty when clean).

    Complementarity is checked classwise: a class served at full efficiency
    must see its queue at or below its own threshold, a partially served
    class must see the queue pinned at its threshold, and a shut-out class
    must see it at or above.  The priority rule and the s2/s3 efficiency
    ordering at the low-priority ED are checked as well.
    """
    errs: list[str] = []
    for name, v in zip(("q_e1", "q_e23", "q_c", "q_n",
                        "h1", "h2c", "h2n", "h3"), state.masses()):
        if v < -tol:
            errs.append(f"{name} >= 0")
    for name, a in zip(("a_e1", "a_e2", "a_e3", "a_c", "a_n"),
                       state.efficiencies()):
        if not -tol <= a <= 1 + tol:
            errs.append(f"{name} in [0,1]")
    if state.a_e2 > state.a_e3 + tol:
        errs.append("a_e2 <= a_e3")
    if state.a_e1 < 1 - tol and (state.a_e2 > tol or state.a_e3 > tol):
        errs.append("a_e1 < 1 implies a_e2 = a_e3 = 0")
    if state.q_e1 > tol and alloc.mu_e23 > tol:
        errs.append("q_e1 > 0 implies mu_e23 = 0")

    def _comp(label, a, q, ceiling):
        if a >= 1 - tol:
            if q > ceiling + tol:
                errs.append(f"{label}: full efficiency but queue above threshold")
        elif a > tol:
            if abs(q - ceiling) > tol:
                errs.append(f"{label}: partial efficiency off threshold")
        else:
            if q < ceiling - tol:
                errs.append(f"{label}: shut out below threshold")

    _comp("hped/s1", state.a_e1, state.q_e1, alloc.mu_e1 * params.tau_e1)
    _comp("lped/s2", state.a_e2, state.q_e23, alloc.mu_e23 * params.tau_e2)
    _comp("lped/s3", state.a_e3, state.q_e23, alloc.mu_e23 * params.tau_e3)
    _comp("clinic", state.a_c, state.q_c, alloc.mu_c * params.tau_c)
    _comp("nclinic", state.a_n, state.q_n, alloc.mu_n * params.tau_n)
    return errs
