"""Forward-time fluid simulator: an independent check on the solver.

Integrates the eight mass balances with explicit first-order steps from an
empty (or given) initial state.  Joining decisions are taken at the instant
of arrival: a class enters a queue only while the queue is below that
class's threshold, queues are clamped at their thresholds with the excess
routed to the second-choice facility or the repositories, and the
low-priority ED admits nobody while the high-priority queue is congested.
A solver candidate is genuine iff the simulated equilibrium reproduces it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .combinations import Candidate
from .model import (
    Allocation,
    ModelError,
    PeriodParams,
    StationaryState,
    flow_residuals,
    period_objective,
)


class UnstableStep(ModelError):
    """A mass went negative; the time step is too large for these rates."""


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray            # rows: (q1, q23, qc, qn, h1, h2c, h2n, h3)
    alphas: np.ndarray            # instantaneous admission fractions (5)
    services: np.ndarray          # service rates (srv1, srv23, srvc, srvn)
    converged: bool
    equilibrium: StationaryState

    def final_masses(self) -> np.ndarray:
        return self.states[-1]

    def state_at(self, i: int) -> StationaryState:
        return StationaryState(*self.states[i], *self.alphas[i])

    def conservation_gaps(self, params: PeriodParams) -> np.ndarray:
        """Mass-balance error between consecutive snapshots.

        Change of total stored mass minus the integral (trapezoid) of
        arrivals plus clinic-queue deterioration spawn, less services and
        permanent exits.  Bounded by the step error of the scheme.
        """
        pr = params
        m = self.states.sum(axis=1)
        qc, qn = self.states[:, 2], self.states[:, 3]
        h1, h2c, h2n, h3 = (self.states[:, i] for i in range(4, 8))
        net = (pr.lam + (qc + qn) * pr.delta21
               - self.services.sum(axis=1)
               - (pr.sigma1 * h1 + pr.sigma2 * (h2c + h2n) + pr.sigma3 * h3)
               - pr.delta10 * h1 - pr.delta34 * h3)
        dt = np.diff(self.times)
        flux = 0.5 * (net[1:] + net[:-1]) * dt
        return np.diff(m) - flux


@dataclass(frozen=True)
class VerifyReport:
    max_deviation: float
    deviations: dict[str, float]
    converged: bool
    residual: float

    def worst(self) -> str:
        return max(self.deviations, key=self.deviations.get)


def _admission(q: float, ceiling: float, service: float, attempts: float,
               dt: float) -> float:
    """Rate admitted to a clamped queue this step (divert the rest)."""
    if attempts <= 0.0:
        return 0.0
    room = (ceiling - q) / dt + service
    if room <= 0.0:
        return 0.0
    return min(attempts, room)


def simulate(params: PeriodParams, alloc: Allocation, horizon: float = 200.0,
             dt: float = 1e-3, init: StationaryState | None = None,
             conv_tol: float = 1e-6, sample_every: float = 0.5) -> Trajectory:
    """Integrate the network dynamics under a fixed allocation.

    Convergence is declared when the state moved less than ``conv_tol``
    (sup-norm) over the trailing five percent of the horizon; the
    integration then stops early.  Raises UnstableStep when a repository
    update overshoots below zero, which signals dt too large for the exit
    rates.
    """
    pr = params
    if dt <= 0 or horizon < dt:
        raise ValueError("need dt > 0 and horizon >= dt")
    mu1, mu23, muc, mun = alloc.as_tuple()
    c1 = mu1 * pr.tau_e1
    c2 = mu23 * pr.tau_e2
    c3 = mu23 * pr.tau_e3
    cc = muc * pr.tau_c
    cn = mun * pr.tau_n
    pc = pr.p_covid
    p = pr.p
    d1, d2, d3 = pr.d1_out, pr.d2_out, pr.d3_out

    if init is None:
        q1 = q23 = qc = qn = h1 = h2c = h2n = h3 = 0.0
    else:
        q1, q23, qc, qn, h1, h2c, h2n, h3 = init.masses()

    window = max(0.05 * horizon, 10 * dt)
    lag_steps = max(int(round(window / sample_every)), 1)
    n_steps = int(round(horizon / dt))
    sample_stride = max(int(round(sample_every / dt)), 1)
    times = [0.0]
    states = [(q1, q23, qc, qn, h1, h2c, h2n, h3)]
    alphas = [(1.0, 1.0, 1.0, 1.0, 1.0)]
    services = [(0.0, 0.0, 0.0, 0.0)]
    recent: list[tuple] = [states[0]]
    converged = False
    flows = {}

    for step in range(1, n_steps + 1):
        inflow1 = pr.lambda1 + pr.beta1 * h1 + (qc + qn) * pr.delta21
        a2c = pr.lam2c + pr.beta2 * h2c
        a2n = pr.lam2n + pr.beta2 * h2n
        a3 = pr.lambda3 + pr.beta3 * h3

        join1 = _admission(q1, c1, mu1, inflow1, dt)
        divert1 = inflow1 - join1
        hped_clear = q1 < c1 or (q1 <= 0.0 and inflow1 <= mu1 + 1e-15)

        # The two s2 streams try (LPED, clinic) in an order set by how the
        # patient arrived; rejection fractions couple the two facilities, so
        # resolve the admitted shares by a small fixed-point iteration.
        walk_c, call_c = (1 - p) * a2c, p * a2c
        walk_n, call_n = (1 - p) * a2n, p * a2n
        g2 = flows.get("g2", 1.0)
        gc = flows.get("gc", 1.0)
        gn = flows.get("gn", 1.0)
        join3 = _admission(q23, c3, mu23, a3, dt) if hped_clear else 0.0
        for _ in range(60):
            pool2 = walk_c + walk_n + (1 - gc) * call_c + (1 - gn) * call_n
            if hped_clear:
                room2 = max((c2 - q23) / dt + mu23 - join3, 0.0)
                g2_new = 1.0 if pool2 <= 0 else min(room2 / pool2, 1.0)
            else:
                g2_new = 0.0
            pool_c = call_c + (1 - g2_new) * walk_c
            pool_n = call_n + (1 - g2_new) * walk_n
            adm_c = _admission(qc, cc, muc, pool_c, dt)
            adm_n = _admission(qn, cn, mun, pool_n, dt)
            gc_new = 1.0 if pool_c <= 0 else adm_c / pool_c
            gn_new = 1.0 if pool_n <= 0 else adm_n / pool_n
            if (abs(g2_new - g2) + abs(gc_new - gc) + abs(gn_new - gn)) < 1e-13:
                g2, gc, gn = g2_new, gc_new, gn_new
                break
            g2, gc, gn = g2_new, gc_new, gn_new
        flows = {"g2": g2, "gc": gc, "gn": gn}
        join2 = g2 * (walk_c + walk_n + (1 - gc) * call_c + (1 - gn) * call_n)
        pool_c = call_c + (1 - g2) * walk_c
        pool_n = call_n + (1 - g2) * walk_n
        join_c = gc * pool_c
        join_n = gn * pool_n
        # Rejected at both choices, per disease type.
        lost_c = a2c - g2 * (walk_c + (1 - gc) * call_c) - join_c
        lost_n = a2n - g2 * (walk_n + (1 - gn) * call_n) - join_n
        divert3 = a3 - join3

        srv1 = mu1 if q1 > 0 else min(join1, mu1)
        srv23 = mu23 if q23 > 0 else min(join2 + join3, mu23)
        srv_c = muc if qc > 0 else min(join_c, muc)
        srv_n = mun if qn > 0 else min(join_n, mun)

        if step == 1:
            services[0] = (srv1, srv23, srv_c, srv_n)
        evo2 = h3 * pr.delta32 + h1 * pr.delta12
        s2_stored = h2c + h2n
        q1 = max(q1 + dt * (join1 - srv1), 0.0)
        q23 = max(q23 + dt * (join2 + join3 - srv23), 0.0)
        qc = max(qc + dt * (join_c - srv_c), 0.0)
        qn = max(qn + dt * (join_n - srv_n), 0.0)
        h1 = h1 + dt * (divert1 + s2_stored * pr.delta21 - h1 * d1)
        h2c = h2c + dt * (lost_c + evo2 * pc - h2c * d2)
        h2n = h2n + dt * (lost_n + evo2 * (1 - pc) - h2n * d2)
        h3 = h3 + dt * (divert3 + pr.delta23 * s2_stored - h3 * d3)
        if min(h1, h2c, h2n, h3) < -1e-9:
            raise UnstableStep(f"repository mass went negative at step {step}"
                               " (reduce dt)")

        if step % sample_stride == 0 or step == n_steps:
            times.append(step * dt)
            states.append((q1, q23, qc, qn, h1, h2c, h2n, h3))
            alphas.append((1.0 if inflow1 <= 1e-15
                           else min(join1 / inflow1, 1.0),
                           g2,
                           1.0 if a3 <= 1e-15 else min(join3 / a3, 1.0),
                           gc, gn))
            services.append((srv1, srv23, srv_c, srv_n))
            recent.append(states[-1])
            if len(recent) > lag_steps + 1:
                recent.pop(0)
                drift = max(abs(a - b) for a, b in
                            zip(recent[-1], recent[0]))
                if drift < conv_tol:
                    converged = True
                    break

    # Efficiencies read off the final admission fractions.
    a_e1 = 1.0 if inflow1 <= 1e-15 else min(join1 / inflow1, 1.0)
    a_e3 = 1.0 if a3 <= 1e-15 else min(join3 / a3, 1.0)
    eq = StationaryState(q1, q23, qc, qn, h1, h2c, h2n, h3,
                         a_e1, g2, a_e3, gc, gn)
    return Trajectory(np.array(times), np.array(states), np.array(alphas),
                      np.array(services), converged, eq)


def stationary_for_allocation(params: PeriodParams, alloc: Allocation,
                              dt: float = 0.05, horizon: float = 600.0,
                              conv_tol: float = 1e-9) -> StationaryState:
    """Equilibrium under an arbitrary fixed allocation, via coarse stepping.

    The clamped dynamics pin queues to their thresholds exactly, so the
    fixed point is insensitive to the step size; a coarse step makes this
    cheap enough for brute-force searches over allocation grids.
    """
    traj = simulate(params, alloc, horizon=horizon, dt=dt,
                    conv_tol=conv_tol, sample_every=max(dt * 10, 0.5))
    return traj.equilibrium


_MASSES = ("q_e1", "q_e23", "q_c", "q_n", "h1", "h2c", "h2n", "h3")


def verify(cand: Candidate, params: PeriodParams, dt: float = 1e-3,
           horizon: float = 200.0) -> VerifyReport:
    """Simulate a candidate's allocation and compare the equilibria.

    The report carries the componentwise gaps over queues, repositories,
    efficiencies and the period cost; a feasible solver candidate should
    agree with the simulator to well under 1e-3 everywhere.  An efficiency
    is only compared while its class actually has inflow: with nobody
    attempting, the served fraction is a 0/0 convention on both sides.
    """
    pr = params
    traj = simulate(params, cand.alloc, horizon=horizon, dt=dt)
    eq = traj.equilibrium
    devs = {name: abs(getattr(eq, name) - getattr(cand.state, name))
            for name in _MASSES}
    attempts = {
        "a_e1": pr.lambda1 + pr.beta1 * eq.h1
                + (eq.q_c + eq.q_n) * pr.delta21,
        "a_e2": pr.lambda2 + pr.beta2 * (eq.h2c + eq.h2n),
        "a_e3": pr.lambda3 + pr.beta3 * eq.h3,
        "a_c": pr.lam2c + pr.beta2 * eq.h2c,
        "a_n": pr.lam2n + pr.beta2 * eq.h2n,
    }
    for name, flow in attempts.items():
        if flow > 1e-12:
            devs[name] = abs(getattr(eq, name) - getattr(cand.state, name))
    devs["objective"] = abs(period_objective(eq, params) - cand.objective)
    res = float(np.max(np.abs(flow_residuals(eq, cand.alloc, params))))
    return VerifyReport(max(devs.values()), devs, traj.converged, res)
