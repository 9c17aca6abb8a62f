"""Command-line front end: solve, sweep, plan, simulate.

Exit codes are a stable contract: 0 success, 2 scenario/usage error,
3 solver error, 4 horizon too deep, 5 simulation failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import multi_period, oracle, single_period
from .combinations import Candidate
from .model import Allocation, ModelError, flow_residuals, period_objective
from .scenario import ScenarioError, SweepGrid, load_scenario

EXIT_OK = 0
EXIT_SCHEMA = 2
EXIT_SOLVER = 3
EXIT_DEPTH = 4
EXIT_SIM = 5

SWEEP_HEADER = ("gamma,combination,label,objective,mu_e1,mu_e23,mu_c,mu_n,"
                "a_e1,a_e2,a_e3,a_c,a_n,q_e1,q_e23,q_c,q_n,h1,h2c,h2n,h3")
PLAN_HEADER = "index,pd_points,pd_objectives,global_objective"


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def _candidate_fields(cand: Candidate) -> dict:
    st = cand.state
    return {
        "combination": cand.combination_id,
        "label": cand.point_label,
        "objective": cand.objective,
        "mu_e1": cand.alloc.mu_e1, "mu_e23": cand.alloc.mu_e23,
        "mu_c": cand.alloc.mu_c, "mu_n": cand.alloc.mu_n,
        "a_e1": st.a_e1, "a_e2": st.a_e2, "a_e3": st.a_e3,
        "a_c": st.a_c, "a_n": st.a_n,
        "q_e1": st.q_e1, "q_e23": st.q_e23, "q_c": st.q_c, "q_n": st.q_n,
        "h1": st.h1, "h2c": st.h2c, "h2n": st.h2n, "h3": st.h3,
    }


def _workers(args) -> int:
    env = os.environ.get("PANCAP_WORKERS")
    if env:
        return max(int(env), 1)
    if getattr(args, "workers", None):
        return max(args.workers, 1)
    return os.cpu_count() or 1


def cmd_solve(args) -> int:
    scn = load_scenario(args.scenario)
    params = scn.single
    if args.gamma is not None:
        params = replace(params, gamma=args.gamma)
    cand = single_period.solve(params, scn.solver.tolerance)
    fields = _candidate_fields(cand)
    if args.json:
        print(json.dumps(fields, indent=2, default=float))
    elif args.csv:
        keys = list(fields)
        print(",".join(keys))
        print(",".join(_fmt(fields[k]) if isinstance(fields[k], float)
                       else str(fields[k]) for k in keys))
    else:
        print(f"combination: {cand.label}")
        print(f"objective:   {_fmt(cand.objective)}")
        print("allocation:  mu_e1={} mu_e23={} mu_c={} mu_n={}".format(
            *(_fmt(v) for v in cand.alloc.as_tuple())))
        st = cand.state
        print("efficiency:  a_e1={} a_e2={} a_e3={} a_c={} a_n={}".format(
            *(_fmt(a) for a in st.efficiencies())))
        print("queues:      q_e1={} q_e23={} q_c={} q_n={}".format(
            *(_fmt(v) for v in (st.q_e1, st.q_e23, st.q_c, st.q_n))))
        print("repository:  h1={} h2c={} h2n={} h3={}".format(
            *(_fmt(v) for v in (st.h1, st.h2c, st.h2n, st.h3))))
    return EXIT_OK


def _parse_grid(text: str) -> SweepGrid:
    try:
        start, stop, step = (float(v) for v in text.split(":"))
    except ValueError:
        raise ScenarioError(f"bad grid {text!r}; use start:stop:step")
    if step <= 0:
        raise ScenarioError("grid step must be positive")
    return SweepGrid(start, stop, step)


def cmd_sweep(args) -> int:
    scn = load_scenario(args.scenario)
    params = scn.single
    if args.grid:
        grid = _parse_grid(args.grid)
    elif scn.solver.sweep_grid is not None:
        grid = scn.solver.sweep_grid
    else:
        grid = SweepGrid(0.05, params.lam, 0.05)
    points = grid.points()
    if not points:
        raise ScenarioError("empty sweep grid")

    workers = _workers(args)
    gammas = [replace(params, gamma=g) for g in points]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            recs = list(pool.map(
                lambda p: single_period.capacity_sweep(p, [p.gamma])[0],
                gammas))
    else:
        recs = single_period.capacity_sweep(params, points)

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SWEEP_HEADER.split(","))
    for rec in recs:
        f = _candidate_fields(rec.optimal)
        writer.writerow([_fmt(rec.gamma), f["combination"], f["label"]] + [
            _fmt(f[k]) for k in SWEEP_HEADER.split(",")[3:]])
    csv_text = buf.getvalue()

    verdict = single_period.check_preference_order(recs, params.p_covid)
    pw = single_period.check_piecewise_linear(recs)
    meta = {
        "feasibility_intervals": {
            str(k): list(v) for k, v in sorted(
                single_period.feasibility_intervals(recs).items())},
        "preference_order": {
            "passed": verdict.passed,
            "sequence": list(verdict.sequence),
            "expected_order": list(verdict.order),
            "violation_index": verdict.violation_index,
        },
        "breakpoints": [
            {"gamma": b.gamma, "id_change": b.id_change,
             "second_difference": b.second_difference}
            for b in pw.breakpoints],
        "segments": [{"combination": cid, "max_affine_deviation": dev}
                     for cid, dev in zip(pw.segment_ids,
                                         pw.max_affine_deviation)],
    }
    if args.out:
        out = Path(args.out)
        out.write_text(csv_text)
        out.with_suffix(".json").write_text(json.dumps(meta, indent=2))
        print(f"wrote {out} and {out.with_suffix('.json')}")
    else:
        sys.stdout.write(csv_text)
    return EXIT_OK


def _plan_rows(chains) -> list[list[str]]:
    rows = []
    for i, ch in enumerate(chains, start=1):
        rows.append([str(i), ";".join(ch.labels),
                     ";".join(_fmt(o) for o in ch.objectives),
                     _fmt(ch.global_objective)])
    return rows


def cmd_plan(args) -> int:
    scn = load_scenario(args.scenario)
    periods = list(scn.periods)
    want = args.policy
    out_lines = []
    chains = None
    if want in ("optimal", "both"):
        if args.full_table:
            plan, chains = multi_period.solve_horizon(periods,
                                                      collect_chains=True)
        else:
            plan = multi_period.solve_horizon(periods)
        out_lines.append("optimal: " + " ".join(plan.labels))
        out_lines.append("  per-period objectives: "
                         + " ".join(_fmt(o) for o in plan.objectives))
        out_lines.append(f"  global objective: {_fmt(plan.global_objective)}")
    if want in ("greedy", "both"):
        plan = multi_period.greedy_horizon(periods)
        out_lines.append("greedy: " + " ".join(plan.labels))
        out_lines.append("  per-period objectives: "
                         + " ".join(_fmt(o) for o in plan.objectives))
        out_lines.append(f"  global objective: {_fmt(plan.global_objective)}")
    print("\n".join(out_lines))
    if args.full_table:
        if chains is None:
            _, chains = multi_period.solve_horizon(periods,
                                                   collect_chains=True)
        writer = csv.writer(sys.stdout, lineterminator="\n")
        writer.writerow(PLAN_HEADER.split(","))
        writer.writerows(_plan_rows(chains))
    return EXIT_OK


def cmd_simulate(args) -> int:
    scn = load_scenario(args.scenario)
    params = scn.single
    try:
        parts = [float(v) for v in args.alloc.split(",")]
        if len(parts) != 4:
            raise ValueError
    except ValueError:
        raise ScenarioError(f"bad --alloc {args.alloc!r}; use e1,e23,c,n")
    if any(v < 0 for v in parts) or sum(parts) > params.gamma + 1e-9:
        raise ScenarioError("allocation must be nonnegative within gamma")
    alloc = Allocation(*parts)
    dt = args.dt if args.dt is not None else scn.solver.dt
    horizon = args.horizon if args.horizon is not None else scn.solver.horizon
    traj = oracle.simulate(params, alloc, horizon=horizon, dt=dt)
    eq = traj.equilibrium
    res = float(np.max(np.abs(flow_residuals(eq, alloc, params))))
    print(f"converged:  {traj.converged}")
    print(f"residual:   {_fmt(res)}")
    print(f"objective:  {_fmt(period_objective(eq, params))}")
    print("efficiency: a_e1={} a_e2={} a_e3={} a_c={} a_n={}".format(
        *(_fmt(a) for a in eq.efficiencies())))
    print("queues:     q_e1={} q_e23={} q_c={} q_n={}".format(
        *(_fmt(v) for v in (eq.q_e1, eq.q_e23, eq.q_c, eq.q_n))))
    print("repository: h1={} h2c={} h2n={} h3={}".format(
        *(_fmt(v) for v in (eq.h1, eq.h2c, eq.h2n, eq.h3))))
    if args.trace:
        with open(args.trace, "w") as fh:
            fh.write("time q_e1 q_e23 q_c q_n h1 h2c h2n h3 "
                     "a_e1 a_e2 a_e3 a_c a_n\n")
            for t, row, alf in zip(traj.times, traj.states, traj.alphas):
                fh.write(" ".join([_fmt(t)] + [_fmt(v) for v in row]
                                  + [_fmt(a) for a in alf]) + "\n")
    if not traj.converged:
        print("warning: not converged within horizon", file=sys.stderr)
        return EXIT_SIM
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pancap",
        description="Capacity allocation for a pandemic hospital network")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="optimal one-period allocation")
    p.add_argument("scenario")
    p.add_argument("--gamma", type=float, default=None,
                   help="override total capacity")
    fmt = p.add_mutually_exclusive_group()
    fmt.add_argument("--json", action="store_true")
    fmt.add_argument("--csv", action="store_true")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", help="solve across a capacity grid")
    p.add_argument("scenario")
    p.add_argument("--grid", help="start:stop:step")
    p.add_argument("--out", help="CSV path (sidecar JSON goes next to it)")
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("plan", help="multi-period planning")
    p.add_argument("scenario")
    p.add_argument("--policy", choices=("optimal", "greedy", "both"),
                   default="optimal")
    p.add_argument("--full-table", action="store_true",
                   help="emit every enumerated chain as CSV")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("simulate", help="forward-simulate an allocation")
    p.add_argument("scenario")
    p.add_argument("--alloc", required=True, help="mu_e1,mu_e23,mu_c,mu_n")
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--horizon", type=float, default=None)
    p.add_argument("--trace", help="write the trajectory to this path")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_SCHEMA if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except multi_period.DepthExceeded as exc:
        print(f"plan error: {exc}", file=sys.stderr)
        return EXIT_DEPTH
    except oracle.UnstableStep as exc:
        print(f"simulation error: {exc}", file=sys.stderr)
        return EXIT_SIM
    except ModelError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ValueError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
