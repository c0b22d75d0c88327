"""Exact MILP solving: LP relaxations plus best-bound branch-and-bound.

Design highlights, all reproducibility-driven:
  * branching on the most-fractional integral variable, ties by lowest id,
    branch-down child enqueued first;
  * best-bound node selection with FIFO tie-breaking;
  * warm starts become the initial incumbent after an exact rational
    feasibility re-check (an infeasible warm start logs a warning and the
    search starts cold);
  * every incumbent is re-verified against the exact rational constraint
    data from the IR before acceptance, so floating-point drift in the LP
    engine can never certify a wrong value.
"""

from __future__ import annotations

import enum
import heapq
import logging
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np
import scipy.sparse as sp

from . import _simplex
from ._simplex import LpProblem, LpState, NumericalError
from .milp_ir import (Direction, MilpModel, Sense, VarKind,
                      constraint_satisfied, evaluate_constraint)

log = logging.getLogger(__name__)

_ABS_CUTOFF_EPS = 1e-9


class SolverError(Exception):
    """Internal solver failure (LP engine did not converge)."""


class Status(enum.Enum):
    OPTIMAL = "optimal"
    FEASIBLE = "feasible"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    TIME_LIMIT = "time_limit"


@dataclass
class SolveConfig:
    time_limit: float = 3600.0
    gap_tolerance: float = 0.0
    feasibility_tol: float = 1e-6
    integrality_tol: float = 1e-6
    node_limit: Optional[int] = None
    threads: int = 1

    def __post_init__(self):
        if self.time_limit <= 0:
            raise ValueError("time_limit must be positive")
        if self.feasibility_tol <= 0 or self.integrality_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.gap_tolerance < 0:
            raise ValueError("gap_tolerance must be nonnegative")
        if self.threads < 1:
            raise ValueError("threads must be a positive integer")


@dataclass
class SolveResult:
    status: Status
    objective: Optional[float]
    objective_exact: Optional[Fraction]
    best_bound: float
    incumbent: Optional[dict]          # vid -> int (integral) / float (continuous)
    node_count: int
    wall_time: float
    lp_state: Optional[LpState] = field(default=None, repr=False, compare=False)

    @property
    def gap(self) -> float:
        if self.objective is None or not np.isfinite(self.best_bound):
            return float("inf")
        return abs(self.objective - self.best_bound) / max(1.0, abs(self.objective))


@dataclass
class LpOutcome:
    status: Status
    objective: Optional[float]
    values: Optional[dict]             # vid -> float


@dataclass
class CheckReport:
    feasible: bool
    violated: list                     # constraint ids
    bound_violations: list             # variable ids


@dataclass
class Prepared:
    """Float arrays for the LP engine, derived once from the rational IR."""

    model: MilpModel
    problem: LpProblem
    int_ids: np.ndarray                # structural ids of integral variables
    sign: float                        # +1 minimize, -1 maximize (internal sense)


def prepare(model: MilpModel) -> Prepared:
    model.validate()
    n = model.num_variables
    m = model.num_constraints
    lb = np.zeros(n + m)
    ub = np.zeros(n + m)
    c = np.zeros(n + m)
    sign = 1.0 if model.direction is Direction.MINIMIZE else -1.0
    for var in model.variables:
        lb[var.vid] = float(var.lb)
        ub[var.vid] = float(var.ub)
    for vid, coef in model.objective_terms.items():
        c[vid] = sign * float(coef)

    rows, cols, data = [], [], []
    b = np.zeros(m)
    for i, con in enumerate(model.constraints):
        for vid, coef in con.terms:
            rows.append(i)
            cols.append(vid)
            data.append(float(coef))
        b[i] = float(con.rhs)
        logical = n + i
        rows.append(i)
        cols.append(logical)
        data.append(1.0)
        if con.sense is Sense.LE:
            lb[logical], ub[logical] = 0.0, np.inf
        elif con.sense is Sense.GE:
            lb[logical], ub[logical] = -np.inf, 0.0
        else:
            lb[logical], ub[logical] = 0.0, 0.0
    A = sp.csc_matrix((data, (rows, cols)), shape=(m, n + m))
    int_ids = np.array([v.vid for v in model.variables if v.is_integral],
                       dtype=np.int64)
    return Prepared(model, LpProblem(A, b, c, lb, ub, n), int_ids, sign)


def _solve_node_lp(prep: Prepared, lb, ub, state, deadline,
                   feas_tol) -> _simplex.LpSolution:
    try:
        sol = _simplex.solve_lp_arrays(prep.problem, lb=lb, ub=ub, state=state,
                                       feas_tol=feas_tol, deadline=deadline)
    except NumericalError:
        sol = None
    if sol is not None and sol.status not in (_simplex.ITERATION_LIMIT,):
        return sol
    # cold restart with Bland's rule: finite by construction
    try:
        return _simplex.solve_lp_arrays(
            prep.problem, lb=lb, ub=ub, state=None, feas_tol=feas_tol,
            deadline=deadline, force_bland=True,
            iteration_limit=20000 + 400 * (prep.problem.m + prep.problem.n_total))
    except NumericalError as exc:
        raise SolverError(f"LP engine failed: {exc}") from exc


def solve_lp(model: MilpModel,
             config: Optional[SolveConfig] = None) -> LpOutcome:
    """Solve the LP relaxation of `model` (integrality dropped)."""
    config = config or SolveConfig()
    prep = prepare(model)
    deadline = time.monotonic() + config.time_limit
    sol = _solve_node_lp(prep, None, None, None, deadline,
                         config.feasibility_tol * 0.1)
    if sol.status == _simplex.OPTIMAL:
        values = {v.vid: float(sol.x[v.vid]) for v in model.variables}
        return LpOutcome(Status.OPTIMAL, prep.sign * sol.objective, values)
    if sol.status == _simplex.INFEASIBLE:
        return LpOutcome(Status.INFEASIBLE, None, None)
    if sol.status == _simplex.UNBOUNDED:
        return LpOutcome(Status.UNBOUNDED, None, None)
    return LpOutcome(Status.TIME_LIMIT, None, None)


def exact_feasible(model: MilpModel, assignment: dict,
                   feasibility_tol: float = 1e-6) -> CheckReport:
    """Exact rational feasibility check of a full assignment."""
    missing = [v.vid for v in model.variables if v.vid not in assignment]
    if missing:
        raise ValueError(f"assignment missing variable ids {missing[:5]}")
    tol = Fraction(feasibility_tol).limit_denominator(10 ** 12)
    bound_bad = []
    for var in model.variables:
        val = Fraction(assignment[var.vid]) if isinstance(assignment[var.vid], int) \
            else Fraction(float(assignment[var.vid]))
        if val < var.lb - tol or val > var.ub + tol:
            bound_bad.append(var.vid)
    violated = [con.cid for con in model.constraints
                if not constraint_satisfied(con, assignment, tol)]
    return CheckReport(not violated and not bound_bad, violated, bound_bad)


def check_assignment(model: MilpModel, assignment: dict,
                     feasibility_tol: float = 1e-6) -> CheckReport:
    return exact_feasible(model, assignment, feasibility_tol)


@dataclass(order=True)
class _Node:
    bound: float
    seq: int
    changes: tuple = field(compare=False)        # ((vid, lo, hi), ...)
    state: Optional[LpState] = field(compare=False, default=None)


def _apply_changes(prep: Prepared, changes):
    lb = prep.problem.lb.copy()
    ub = prep.problem.ub.copy()
    for vid, lo, hi in changes:
        lb[vid] = max(lb[vid], lo)
        ub[vid] = min(ub[vid], hi)
    return lb, ub


def _assignment_from_x(model: MilpModel, x: np.ndarray) -> dict:
    out = {}
    for var in model.variables:
        if var.is_integral:
            out[var.vid] = int(round(x[var.vid]))
        else:
            out[var.vid] = float(x[var.vid])
    return out


def _try_warm_start(model: MilpModel, prep: Prepared, config: SolveConfig,
                    deadline: float):
    """Fix the warm integral assignment, LP-complete the continuous rest."""
    warm = model.warm_start
    if not warm:
        return None
    lb = prep.problem.lb.copy()
    ub = prep.problem.ub.copy()
    for vid, val in warm.items():
        lb[vid] = ub[vid] = float(val)
    missing = [int(v) for v in prep.int_ids if int(v) not in warm]
    if missing:
        log.warning("warm start leaves %d integral variables free", len(missing))
    sol = _solve_node_lp(prep, lb, ub, None, deadline, config.feasibility_tol * 0.1)
    if sol.status != _simplex.OPTIMAL:
        log.warning("warm start infeasible; starting cold")
        return None
    assignment = _assignment_from_x(model, sol.x)
    report = exact_feasible(model, assignment, config.feasibility_tol)
    if not report.feasible:
        log.warning("warm start failed exact re-check; starting cold")
        return None
    return assignment


def solve_milp(model: MilpModel, config: Optional[SolveConfig] = None,
               lp_hint: Optional[LpState] = None) -> SolveResult:
    """Best-bound branch-and-bound over the integral variables of `model`.

    `lp_hint` optionally seeds the root LP basis (used when chaining many
    structurally identical models); it never affects returned values, only
    the work needed to reach them.
    """
    config = config or SolveConfig()
    t0 = time.monotonic()
    deadline = t0 + config.time_limit
    prep = prepare(model)
    int_ids = prep.int_ids
    sign = prep.sign

    incumbent = None            # assignment dict
    incumbent_exact = None      # Fraction, in the model's own sense
    incumbent_internal = np.inf  # float, minimize sense
    exact_rejections = 0

    warm = _try_warm_start(model, prep, config, deadline)
    if warm is not None:
        incumbent = warm
        incumbent_exact = model.evaluate_objective(warm)
        incumbent_internal = sign * float(incumbent_exact)

    heap = []
    seq = 0
    heapq.heappush(heap, _Node(-np.inf, seq, (), lp_hint))
    node_count = 0
    timed_out = False
    unbounded = False
    final_state = None

    def cutoff() -> float:
        if incumbent is None:
            return np.inf
        rel = config.gap_tolerance * max(1.0, abs(incumbent_internal))
        return incumbent_internal - max(_ABS_CUTOFF_EPS, rel)

    while heap:
        if time.monotonic() > deadline:
            timed_out = True
            break
        if config.node_limit is not None and node_count >= config.node_limit:
            break
        node = heapq.heappop(heap)
        if node.bound >= cutoff():
            continue
        lb, ub = _apply_changes(prep, node.changes)
        sol = _solve_node_lp(prep, lb, ub, node.state, deadline,
                             config.feasibility_tol * 0.1)
        node_count += 1
        if sol.status == _simplex.TIME_LIMIT:
            heapq.heappush(heap, node)    # leave it open for bound reporting
            timed_out = True
            break
        if sol.status == _simplex.INFEASIBLE:
            continue
        if sol.status == _simplex.UNBOUNDED:
            unbounded = True
            break
        obj = sol.objective
        if obj >= cutoff():
            continue
        final_state = sol.state

        if len(int_ids):
            xi = sol.x[int_ids]
            dist = np.abs(xi - np.round(xi))
        else:
            dist = np.zeros(0)
        fractional = dist > config.integrality_tol
        if not fractional.any():
            assignment = _assignment_from_x(model, sol.x)
            report = exact_feasible(model, assignment, config.feasibility_tol)
            if report.feasible:
                exact = model.evaluate_objective(assignment)
                internal = sign * float(exact)
                if internal < incumbent_internal - 1e-12:
                    incumbent = assignment
                    incumbent_exact = exact
                    incumbent_internal = internal
            else:
                exact_rejections += 1
                log.warning("integral LP point failed exact re-check (%d)",
                            exact_rejections)
            continue

        # most-fractional branching, ties by lowest variable id
        frac_score = np.where(fractional, np.minimum(dist, 1.0 - dist), -1.0)
        pick = int(np.argmax(frac_score))
        vid = int(int_ids[pick])
        val = sol.x[vid]
        down = (vid, -np.inf, float(np.floor(val)))
        up = (vid, float(np.ceil(val)), np.inf)
        for change in (down, up):            # branch-down first (FIFO ties)
            seq += 1
            heapq.heappush(heap, _Node(obj, seq, node.changes + (change,),
                                       sol.state))

    wall = time.monotonic() - t0
    open_bound = min((n.bound for n in heap), default=np.inf)

    if unbounded:
        return SolveResult(Status.UNBOUNDED, None, None, -np.inf, None,
                           node_count, wall)

    if incumbent is not None:
        obj_float = float(incumbent_exact)
        # open nodes at or beyond the cutoff cannot improve on the incumbent,
        # so optimality is certified (up to the 1e-9 absolute epsilon, below
        # the granularity of any rational objective this package builds)
        proven = (not heap) or open_bound >= cutoff()
        if proven:
            return SolveResult(Status.OPTIMAL, obj_float, incumbent_exact,
                               obj_float, incumbent, node_count, wall,
                               final_state)
        bound = sign * min(open_bound, incumbent_internal)
        status = Status.TIME_LIMIT if timed_out else Status.FEASIBLE
        return SolveResult(status, obj_float, incumbent_exact, bound,
                           incumbent, node_count, wall, final_state)

    if timed_out or (config.node_limit is not None and heap):
        bound = sign * open_bound if np.isfinite(open_bound) else sign * -np.inf
        status = Status.TIME_LIMIT if timed_out else Status.FEASIBLE
        return SolveResult(status, None, None, bound, None, node_count, wall,
                           final_state)
    return SolveResult(Status.INFEASIBLE, None, None, sign * np.inf, None,
                       node_count, wall, final_state)
