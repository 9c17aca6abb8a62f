"""Scenario documents: named-field YAML in, identical YAML back out.

A scenario holds one or more period parameter records (field names exactly
as on PeriodParams) plus optional solver overrides.  Dumping uses repr of
the floats so a round trip through the loader reproduces the numbers
bit-exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

from .model import InvariantViolation, PeriodParams, params_from_dict

SCHEMA_VERSION = 1


class ScenarioError(Exception):
    """Malformed scenario document."""


@dataclass(frozen=True)
class SweepGrid:
    start: float
    stop: float
    step: float

    def points(self) -> list[float]:
        if self.step <= 0 or self.stop < self.start:
            raise ScenarioError("sweep grid needs step > 0 and stop >= start")
        n = int(round((self.stop - self.start) / self.step))
        pts = [round(self.start + i * self.step, 12) for i in range(n + 1)]
        return [p for p in pts if p <= self.stop + 1e-12]


@dataclass(frozen=True)
class SolverOptions:
    tolerance: float = 1e-9
    sweep_grid: SweepGrid | None = None
    dt: float = 1e-3
    horizon: float = 200.0
    tie_break: str = "full-slots"


@dataclass(frozen=True)
class Scenario:
    periods: tuple[PeriodParams, ...]
    solver: SolverOptions = field(default_factory=SolverOptions)

    @property
    def single(self) -> PeriodParams:
        if len(self.periods) != 1:
            raise ScenarioError("this command needs a one-period scenario")
        return self.periods[0]


def load_scenario(path: str | Path) -> Scenario:
    try:
        data = yaml.safe_load(Path(path).read_text())
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ScenarioError(f"invalid scenario syntax: {exc}") from exc
    return scenario_from_dict(data)


def scenario_from_dict(data) -> Scenario:
    if not isinstance(data, dict):
        raise ScenarioError("scenario must be a mapping")
    if data.get("schema_version") != SCHEMA_VERSION:
        raise ScenarioError(
            f"schema_version must be {SCHEMA_VERSION}, "
            f"got {data.get('schema_version')!r}")
    raw_periods = data.get("periods")
    if not isinstance(raw_periods, list) or not raw_periods:
        raise ScenarioError("scenario needs a non-empty periods list")
    periods = []
    for i, rec in enumerate(raw_periods, start=1):
        if not isinstance(rec, dict):
            raise ScenarioError(f"period {i} must be a mapping")
        try:
            periods.append(params_from_dict(rec))
        except InvariantViolation as exc:
            raise ScenarioError(f"period {i}: {exc}") from exc
        except Exception as exc:
            raise ScenarioError(f"period {i}: {exc}") from exc
    solver = _solver_options(data.get("solver") or {})
    return Scenario(tuple(periods), solver)


def _solver_options(raw) -> SolverOptions:
    if not isinstance(raw, dict):
        raise ScenarioError("solver section must be a mapping")
    grid = None
    if "sweep_grid" in raw and raw["sweep_grid"] is not None:
        g = raw["sweep_grid"]
        try:
            grid = SweepGrid(float(g["start"]), float(g["stop"]),
                             float(g["step"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ScenarioError(f"bad sweep_grid: {exc}") from exc
    known = {"tolerance", "sweep_grid", "dt", "horizon", "tie_break"}
    unknown = set(raw) - known
    if unknown:
        raise ScenarioError("unknown solver options: "
                            + ", ".join(sorted(unknown)))
    return SolverOptions(
        tolerance=float(raw.get("tolerance", 1e-9)),
        sweep_grid=grid,
        dt=float(raw.get("dt", 1e-3)),
        horizon=float(raw.get("horizon", 200.0)),
        tie_break=str(raw.get("tie_break", "full-slots")),
    )


def dump_scenario(scn: Scenario) -> str:
    """Serialize back to scenario text; floats keep full precision."""
    lines = [f"schema_version: {SCHEMA_VERSION}", "periods:"]
    skip = {"death_weight"}
    for pr in scn.periods:
        first = True
        for f in fields(PeriodParams):
            v = getattr(pr, f.name)
            if v is None or (f.name in skip and v == 1.0):
                continue
            prefix = "  - " if first else "    "
            lines.append(f"{prefix}{f.name}: {v!r}")
            first = False
    s = scn.solver
    lines.append("solver:")
    lines.append(f"  tolerance: {s.tolerance!r}")
    lines.append(f"  dt: {s.dt!r}")
    lines.append(f"  horizon: {s.horizon!r}")
    lines.append(f"  tie_break: {s.tie_break}")
    if s.sweep_grid is not None:
        lines.append("  sweep_grid:")
        lines.append(f"    start: {s.sweep_grid.start!r}")
        lines.append(f"    stop: {s.sweep_grid.stop!r}")
        lines.append(f"    step: {s.sweep_grid.step!r}")
    return "\n".join(lines) + "\n"
