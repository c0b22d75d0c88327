"""Bounded-variable primal simplex on sparse constraint matrices.

The solver works on the computational standard form  A x = b,  l <= x <= u,
where every row owns one logical column (a slack with sense-dependent
bounds).  Phase 1 is composite (artificial-free): basic variables may violate
their bounds and the algorithm minimizes the total violation starting from
any basis, which is what makes warm starts across branch-and-bound nodes
cheap.

Dantzig pricing by default; Bland's rule is engaged permanently once the
degenerate-pivot counter passes a threshold, guaranteeing termination.  Two
basis backends: an explicit dense inverse with rank-one updates for small
problems, and a sparse LU factorization with product-form eta updates for
the large decision-diagram relaxations.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

NB_LOWER = 0
NB_UPPER = 1
BASIC = 2

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ITERATION_LIMIT = "iteration_limit"
TIME_LIMIT = "time_limit"

_PIVOT_TOL = 1e-9
_RATIO_EPS = 1e-10
_DJ_TOL = 1e-8
_DENSE_LIMIT = 400


class NumericalError(Exception):
    """Raised when the factorization degrades beyond repair for this start."""


@dataclass
class LpProblem:
    """Standard-form data: structural columns followed by one logical per row."""

    A: sp.csc_matrix          # m x n_total, logical identity appended
    b: np.ndarray             # m
    c: np.ndarray             # n_total (zeros on logicals)
    lb: np.ndarray            # n_total
    ub: np.ndarray            # n_total
    n_structural: int
    At: sp.csr_matrix = field(default=None, repr=False)   # cached transpose

    def __post_init__(self):
        if self.At is None:
            self.At = self.A.T.tocsr()

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def n_total(self) -> int:
        return self.A.shape[1]

    def column(self, j: int) -> np.ndarray:
        out = np.zeros(self.m)
        start, end = self.A.indptr[j], self.A.indptr[j + 1]
        out[self.A.indices[start:end]] = self.A.data[start:end]
        return out


@dataclass
class LpState:
    basis: np.ndarray         # m, int32 variable indices
    vstat: np.ndarray         # n_total, int8

    def copy(self) -> "LpState":
        return LpState(self.basis.copy(), self.vstat.copy())


@dataclass
class LpSolution:
    status: str
    x: np.ndarray
    objective: float
    state: LpState
    iterations: int


class _DenseBasis:
    """Explicit inverse with rank-one pivot updates; rebuilt periodically."""

    refresh_every = 120

    def __init__(self, problem: LpProblem):
        self.problem = problem
        self.m = problem.m
        self.binv = None
        self.updates = 0

    def refactor(self, basis: np.ndarray) -> None:
        B = self.problem.A[:, basis].toarray()
        try:
            self.binv = np.linalg.inv(B)
        except np.linalg.LinAlgError as exc:
            raise NumericalError("singular basis") from exc
        self.updates = 0

    def ftran(self, col: np.ndarray) -> np.ndarray:
        return self.binv @ col

    def btran(self, vec: np.ndarray) -> np.ndarray:
        return vec @ self.binv

    def replace(self, r: int, w: np.ndarray) -> None:
        piv = w[r]
        if abs(piv) < _PIVOT_TOL:
            raise NumericalError("pivot element too small")
        row = self.binv[r] / piv
        w_off = w.copy()
        w_off[r] = 0.0
        self.binv -= np.outer(w_off, row)
        self.binv[r] = row
        self.updates += 1

    @property
    def needs_refresh(self) -> bool:
        return self.updates >= self.refresh_every


class _SparseLuBasis:
    """splu factorization plus product-form eta updates between refactors."""

    refresh_every = 64

    def __init__(self, problem: LpProblem):
        self.problem = problem
        self.m = problem.m
        self.lu = None
        self.etas = []            # (r, w) with w = B^-1 a_j at pivot time

    def refactor(self, basis: np.ndarray) -> None:
        B = self.problem.A[:, basis].tocsc()
        try:
            self.lu = spla.splu(B, permc_spec="COLAMD")
        except RuntimeError as exc:
            raise NumericalError("singular basis") from exc
        self.etas = []

    def ftran(self, col: np.ndarray) -> np.ndarray:
        x = self.lu.solve(col)
        for r, w in self.etas:
            t = x[r] / w[r]
            x -= t * w
            x[r] = t
        return x

    def btran(self, vec: np.ndarray) -> np.ndarray:
        y = np.array(vec, dtype=float, copy=True)
        # (E^T y)_r = (y_r - sum_{i != r} w_i y_i) / w_r, other entries unchanged
        for r, w in reversed(self.etas):
            s = w @ y - w[r] * y[r]
            y[r] = (y[r] - s) / w[r]
        return self.lu.solve(y, trans="T")

    def replace(self, r: int, w: np.ndarray) -> None:
        if abs(w[r]) < _PIVOT_TOL:
            raise NumericalError("pivot element too small")
        self.etas.append((r, w.copy()))

    @property
    def needs_refresh(self) -> bool:
        return len(self.etas) >= self.refresh_every


def default_state(problem: LpProblem) -> LpState:
    """Crash basis: all logicals basic, structurals nonbasic at a finite bound."""
    m, n = problem.m, problem.n_total
    basis = np.arange(n - m, n, dtype=np.int32)
    vstat = np.full(n, NB_LOWER, dtype=np.int8)
    vstat[np.isneginf(problem.lb)] = NB_UPPER
    vstat[basis] = BASIC
    return LpState(basis, vstat)


def solve_lp_arrays(problem: LpProblem,
                    lb: Optional[np.ndarray] = None,
                    ub: Optional[np.ndarray] = None,
                    state: Optional[LpState] = None,
                    feas_tol: float = 1e-7,
                    iteration_limit: Optional[int] = None,
                    bland_threshold: int = 1000,
                    force_bland: bool = False,
                    deadline: Optional[float] = None) -> LpSolution:
    """Solve one LP, optionally warm-started from a previous basis state.

    `lb`/`ub` override the problem bounds (how branch-and-bound nodes tighten
    variable domains).  On NumericalError the caller should retry cold.
    """
    A = problem.A
    At = problem.At
    m, n = problem.m, problem.n_total
    c = problem.c
    lb = problem.lb if lb is None else lb
    ub = problem.ub if ub is None else ub
    if iteration_limit is None:
        iteration_limit = 2000 + 40 * (m + n)

    warm = state is not None
    state = default_state(problem) if state is None else state.copy()
    basis = state.basis
    vstat = state.vstat

    # nonbasic variables sit exactly on their (current) bounds
    x = np.where(vstat == NB_UPPER, ub, lb)
    unset = ~np.isfinite(x)
    if unset.any():
        x[unset] = np.where(np.isfinite(lb[unset]), lb[unset],
                            np.where(np.isfinite(ub[unset]), ub[unset], 0.0))

    engine = _DenseBasis(problem) if m <= _DENSE_LIMIT else _SparseLuBasis(problem)

    def recompute_xb():
        x[basis] = 0.0
        resid = problem.b - A @ x
        x[basis] = engine.ftran(resid)

    try:
        engine.refactor(basis)
    except NumericalError:
        if not warm:
            raise
        fresh = default_state(problem)
        basis, vstat = fresh.basis, fresh.vstat
        x = np.where(vstat == NB_UPPER, ub, lb)
        x[~np.isfinite(x)] = 0.0
        engine.refactor(basis)
    recompute_xb()

    bland = force_bland
    degenerate = 0
    iters = 0
    verified = False

    while True:
        if iters >= iteration_limit:
            return LpSolution(ITERATION_LIMIT, x, float(c @ x),
                              LpState(basis, vstat), iters)
        if deadline is not None and iters % 128 == 0 and time.monotonic() > deadline:
            return LpSolution(TIME_LIMIT, x, float(c @ x),
                              LpState(basis, vstat), iters)
        iters += 1

        xb = x[basis]
        lbB = lb[basis]
        ubB = ub[basis]
        below = xb < lbB - feas_tol
        above = xb > ubB + feas_tol
        in_phase1 = bool(below.any() or above.any())

        if in_phase1:
            cb = np.zeros(m)
            cb[below] = -1.0
            cb[above] = 1.0
        else:
            cb = c[basis]

        y = engine.btran(cb)
        z = At @ y
        d = -z if in_phase1 else c - z

        movable = ub - lb > 0
        elig_lb = (vstat == NB_LOWER) & movable & (d < -_DJ_TOL)
        elig_ub = (vstat == NB_UPPER) & movable & (d > _DJ_TOL)
        eligible = elig_lb | elig_ub

        if not eligible.any():
            if in_phase1:
                return LpSolution(INFEASIBLE, x, float(c @ x),
                                  LpState(basis, vstat), iters)
            if not verified:
                # guard against drift: refactor, recompute and re-price once
                engine.refactor(basis)
                recompute_xb()
                verified = True
                continue
            return LpSolution(OPTIMAL, x, float(c @ x),
                              LpState(basis, vstat), iters)
        verified = False

        if bland:
            j = int(np.flatnonzero(eligible)[0])
        else:
            score = np.where(elig_lb, -d, np.where(elig_ub, d, -np.inf))
            j = int(np.argmax(score))
        sigma = 1.0 if vstat[j] == NB_LOWER else -1.0

        w = engine.ftran(problem.column(j))
        v = sigma * w

        # ratio test: first basic variable to hit a blocking bound; basics that
        # are already beyond a bound block when they re-enter their range
        tgt = np.full(m, np.nan)
        dec_ok = (v > _RATIO_EPS) & ~below
        inc_ok = (v < -_RATIO_EPS) & ~above
        tgt[dec_ok] = np.where(above[dec_ok], ubB[dec_ok], lbB[dec_ok])
        tgt[inc_ok] = np.where(below[inc_ok], lbB[inc_ok], ubB[inc_ok])
        with np.errstate(invalid="ignore"):
            ratios = (xb - tgt) / v
        valid = np.isfinite(ratios)
        ratios = np.where(valid, np.maximum(ratios, 0.0), np.inf)

        t_block = float(ratios.min()) if valid.any() else np.inf
        t_flip = float(ub[j] - lb[j])
        if not np.isfinite(t_flip):
            t_flip = np.inf

        if t_block == np.inf and t_flip == np.inf:
            if in_phase1:
                raise NumericalError("phase-1 ray: inconsistent infeasibility data")
            return LpSolution(UNBOUNDED, x, float(c @ x),
                              LpState(basis, vstat), iters)

        if t_flip < t_block:
            x[j] = ub[j] if vstat[j] == NB_LOWER else lb[j]
            vstat[j] = NB_UPPER if vstat[j] == NB_LOWER else NB_LOWER
            x[basis] = xb - t_flip * v
            continue

        cand = np.flatnonzero(ratios <= t_block + 1e-12)
        if bland:
            r = int(cand[np.argmin(basis[cand])])
        else:
            r = int(cand[np.argmax(np.abs(v[cand]))])
        t_star = float(ratios[r])
        if t_star <= 1e-11:
            degenerate += 1
            if degenerate > bland_threshold:
                bland = True
        else:
            degenerate = 0

        leaving = int(basis[r])
        x[basis] = xb - t_star * v
        x[leaving] = tgt[r]                       # exact clamp to its bound
        x[j] = (lb[j] + t_star) if sigma > 0 else (ub[j] - t_star)
        vstat[leaving] = NB_LOWER if tgt[r] == lb[leaving] else NB_UPPER
        vstat[j] = BASIC
        basis[r] = j
        engine.replace(r, w)
        if engine.needs_refresh:
            engine.refactor(basis)
            recompute_xb()
