"""Forward simulator: convergence, conservation, solver cross-checks."""

import random
from dataclasses import replace

import numpy as np
import pytest

from pancap.model import Allocation, flow_residuals
from pancap.oracle import UnstableStep, simulate, stationary_for_allocation, verify
from pancap.single_period import enumerate_candidates, solve


class TestSimulate:
    def test_zero_arrivals_stay_empty(self, example1):
        p = replace(example1, lambda1=0.0, lambda2=0.0, lambda3=0.0)
        traj = simulate(p, Allocation(0.2, 0.2, 0.2, 0.2), horizon=20.0,
                        dt=1e-3)
        assert traj.converged
        assert np.max(np.abs(traj.states)) == 0.0

    def test_reaches_published_regime(self, example1):
        # Everything on the high-priority ED at minimal capacity: the
        # simulator must land on the all-shut-but-HPED pattern.
        p = replace(example1, gamma=0.30)
        traj = simulate(p, Allocation(0.30, 0, 0, 0))
        eq = traj.equilibrium
        assert traj.converged
        assert eq.a_e1 < 1 and eq.a_e2 == eq.a_e3 == 0.0
        assert eq.q_e1 == pytest.approx(0.30 * p.tau_e1, abs=1e-6)
        res = flow_residuals(eq, Allocation(0.30, 0, 0, 0), p)
        assert np.max(np.abs(res)) < 1e-6

    def test_unstable_step_detected(self, example1):
        with pytest.raises(UnstableStep):
            simulate(example1, Allocation(0.5, 0.5, 0.5, 0.5), horizon=100,
                     dt=10.0)

    def test_equilibrium_idempotence(self, example1):
        p = replace(example1, gamma=1.1)
        cand = solve(p)
        traj = simulate(p, cand.alloc, init=cand.state, horizon=50.0)
        drift = np.max(np.abs(traj.states - np.array(cand.state.masses())))
        assert drift < 1e-6

    def test_step_halving_stable(self, example1):
        p = replace(example1, gamma=0.9)
        cand = solve(p)
        eq1 = simulate(p, cand.alloc, dt=2e-3).equilibrium
        eq2 = simulate(p, cand.alloc, dt=1e-3).equilibrium
        gap = max(abs(a - b) for a, b in zip(eq1.masses(), eq2.masses()))
        # Clamped fixed points are step-size insensitive; halving dt moves
        # the equilibrium by no more than integration noise.
        assert gap < 1e-6

    def test_conservation_along_trajectory(self, example1):
        p = replace(example1, gamma=1.2)
        cand = solve(p)
        traj = simulate(p, cand.alloc, horizon=60.0, dt=1e-3,
                        sample_every=0.1)
        gaps = traj.conservation_gaps(p)
        # Trapezoid error of the half-unit sampling dominates; the mass
        # ledger must balance to that order everywhere.
        assert np.max(np.abs(gaps)) < 5e-4

    def test_snapshots_stay_nonnegative_and_carry_efficiencies(self,
                                                               example1):
        p = replace(example1, gamma=0.8)
        traj = simulate(p, Allocation(0.2, 0.2, 0.2, 0.2), horizon=40.0)
        assert np.min(traj.states) >= 0.0
        assert traj.alphas.shape == (len(traj.times), 5)
        assert np.all((traj.alphas >= 0.0) & (traj.alphas <= 1.0))
        snap = traj.state_at(len(traj.times) - 1)
        assert snap.masses() == pytest.approx(tuple(traj.states[-1]))


class TestVerify:
    def test_feasible_candidates_check_out(self, example1, example2):
        for base, g in ((example1, 1.0), (example2, 0.5)):
            p = replace(base, gamma=g)
            cand = solve(p)
            rep = verify(cand, p)
            assert rep.converged
            assert rep.max_deviation < 1e-3

    def test_corruption_is_flagged(self, example1):
        p = replace(example1, gamma=1.0)
        cand = solve(p)
        bent = replace(cand, state=replace(cand.state,
                                           h1=cand.state.h1 + 0.1))
        rep = verify(bent, p)
        assert rep.worst() == "h1"
        assert rep.deviations["h1"] == pytest.approx(0.1, abs=1e-3)

    def test_every_feasible_point_at_one_capacity(self, example1):
        p = replace(example1, gamma=1.5)
        pts = [c for c in enumerate_candidates(p) if c.status.feasible]
        assert pts
        for cand in pts:
            rep = verify(cand, p)
            assert rep.max_deviation < 1e-3, (cand.label, rep.deviations)


class TestDegenerateClasses:
    def test_zero_s2_flow_compares_masses_only(self, example1):
        # With no medium-severity patients at all, the s2 efficiencies are
        # a 0/0 convention; verification must still agree on the masses.
        p = replace(example1, lambda2=0.0, gamma=0.5)
        cand = solve(p)
        rep = verify(cand, p)
        assert rep.max_deviation < 1e-3

    def test_all_walkins_and_all_callers(self, example1):
        for pv in (0.0, 1.0):
            p = replace(example1, p=pv, gamma=1.0)
            cand = solve(p)
            rep = verify(cand, p)
            assert rep.max_deviation < 1e-3, (pv, rep.deviations)


class TestCoarseEquilibrium:
    def test_matches_fine_integration(self, example1):
        rng = random.Random(71)
        p = replace(example1, gamma=1.3)
        for _ in range(5):
            w = [rng.random() for _ in range(4)]
            s = sum(w)
            alloc = Allocation(*(p.gamma * x / s for x in w))
            coarse = stationary_for_allocation(p, alloc)
            fine = simulate(p, alloc, dt=1e-3).equilibrium
            gap = max(abs(a - b) for a, b in
                      zip(coarse.masses() + coarse.efficiencies(),
                          fine.masses() + fine.efficiencies()))
            assert gap < 1e-5
