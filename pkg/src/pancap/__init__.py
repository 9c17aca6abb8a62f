"""Capacity allocation for a multi-facility healthcare fluid network."""

from .model import (
    Allocation,
    InvariantViolation,
    MissingThresholds,
    ModelError,
    PeriodParams,
    StationaryState,
    derive_thresholds,
    flow_residuals,
    params_from_dict,
    period_objective,
    validate_params,
)
from .combinations import (
    CATALOG,
    Candidate,
    Combination,
    NotReduced,
    SingularSystem,
    Status,
    Unclassifiable,
    assemble_system,
    classify,
    enumerate_extreme_points,
    reassign_boundary,
)
from .single_period import (
    NoFeasibleCandidate,
    OrderVerdict,
    SweepRecord,
    capacity_sweep,
    check_piecewise_linear,
    check_preference_order,
    enumerate_candidates,
    solve,
)
from .oracle import Trajectory, UnstableStep, simulate, verify
from .multi_period import (
    Buffers,
    DepthExceeded,
    Plan,
    compute_buffers,
    effective_params,
    global_objective,
    greedy_horizon,
    solve_horizon,
)
from .scenario import Scenario, ScenarioError, dump_scenario, load_scenario

__version__ = "0.1.0"
