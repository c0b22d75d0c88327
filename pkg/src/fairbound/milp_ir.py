"""Solver-agnostic MILP intermediate representation with exact rational data.

Coefficients, bounds and right-hand sides are stored as ``fractions.Fraction``
so that budget constraints built from integer counts stay exact; conversion to
floating point happens only inside the solver backend.  Finalized models are
frozen and safe to share across threads.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence, Union

Rational = Union[int, Fraction]


class ModelError(Exception):
    """Raised on malformed model construction (duplicate names, bad ids...)."""


class VarKind(enum.Enum):
    BINARY = "binary"
    INTEGER = "integer"
    CONTINUOUS = "continuous"


class Sense(enum.Enum):
    LE = "<="
    EQ = "="
    GE = ">="


class Direction(enum.Enum):
    MINIMIZE = "min"
    MAXIMIZE = "max"


def _as_fraction(value: Rational, what: str) -> Fraction:
    # floats are rejected on purpose: callers must state exact data
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    raise ModelError(f"{what} must be int or Fraction, got {type(value).__name__}")


@dataclass(frozen=True)
class Variable:
    vid: int
    name: str
    kind: VarKind
    lb: Fraction
    ub: Fraction

    @property
    def is_integral(self) -> bool:
        return self.kind in (VarKind.BINARY, VarKind.INTEGER)


@dataclass(frozen=True)
class LinearConstraint:
    cid: int
    name: str
    terms: tuple  # ((vid, Fraction), ...) with unique vids
    sense: Sense
    rhs: Fraction


@dataclass
class MilpModel:
    """A mutable-until-frozen container of variables, constraints, objective."""

    name: str = "model"
    direction: Direction = Direction.MINIMIZE
    variables: list = field(default_factory=list)
    constraints: list = field(default_factory=list)
    objective_terms: dict = field(default_factory=dict)  # vid -> Fraction
    objective_offset: Fraction = Fraction(0)
    warm_start: Optional[dict] = None  # vid -> int for integral variables
    meta: Optional[dict] = field(default=None, repr=False)  # builder layout info
    _names: set = field(default_factory=set)
    _frozen: bool = False

    # -- construction ------------------------------------------------------

    def _check_mutable(self) -> None:
        if self._frozen:
            raise ModelError("model is frozen")

    def add_variable(self, name: str, kind: VarKind,
                     lb: Rational = 0, ub: Rational = 1) -> int:
        """Add a variable and return its fresh id.  Names must be unique."""
        self._check_mutable()
        if name in self._names:
            raise ModelError(f"duplicate variable name {name!r}")
        if kind is VarKind.BINARY:
            lb, ub = Fraction(0), Fraction(1)
        else:
            lb = _as_fraction(lb, f"lower bound of {name}")
            ub = _as_fraction(ub, f"upper bound of {name}")
        if lb > ub:
            raise ModelError(f"empty domain for {name}: [{lb}, {ub}]")
        vid = len(self.variables)
        self.variables.append(Variable(vid, name, kind, lb, ub))
        self._names.add(name)
        return vid

    def add_binary(self, name: str) -> int:
        return self.add_variable(name, VarKind.BINARY)

    def add_integer(self, name: str, lb: Rational, ub: Rational) -> int:
        return self.add_variable(name, VarKind.INTEGER, lb, ub)

    def add_continuous(self, name: str, lb: Rational, ub: Rational) -> int:
        return self.add_variable(name, VarKind.CONTINUOUS, lb, ub)

    def add_constraint(self, terms: Sequence, sense: Sense, rhs: Rational,
                       name: str = "") -> int:
        """Store a constraint verbatim (no presolve at the IR level)."""
        self._check_mutable()
        seen = set()
        normalized = []
        for vid, coef in terms:
            if not (0 <= vid < len(self.variables)):
                raise ModelError(f"constraint references unknown variable id {vid}")
            if vid in seen:
                raise ModelError(f"duplicate variable id {vid} in constraint terms")
            seen.add(vid)
            coef = _as_fraction(coef, "constraint coefficient")
            if coef != 0:
                normalized.append((vid, coef))
        cid = len(self.constraints)
        self.constraints.append(LinearConstraint(
            cid, name or f"c{cid}", tuple(normalized), sense,
            _as_fraction(rhs, "constraint rhs")))
        return cid

    def set_objective(self, terms: Sequence, direction: Direction,
                      offset: Rational = 0) -> None:
        self._check_mutable()
        obj = {}
        for vid, coef in terms:
            if not (0 <= vid < len(self.variables)):
                raise ModelError(f"objective references unknown variable id {vid}")
            coef = _as_fraction(coef, "objective coefficient")
            if vid in obj:
                obj[vid] += coef
            else:
                obj[vid] = coef
        self.objective_terms = {v: c for v, c in obj.items() if c != 0}
        self.objective_offset = _as_fraction(offset, "objective offset")
        self.direction = direction

    def set_warm_start(self, assignment: dict) -> None:
        """Attach a (partial) integral assignment used as the solver hot start."""
        self._check_mutable()
        for vid, value in assignment.items():
            var = self.variables[vid]
            if not var.is_integral:
                raise ModelError(f"warm start may only fix integral variables ({var.name})")
            if not (var.lb <= value <= var.ub):
                raise ModelError(f"warm start value {value} outside domain of {var.name}")
        self.warm_start = {int(v): int(x) for v, x in assignment.items()}

    def freeze(self) -> "MilpModel":
        self._frozen = True
        return self

    # -- inspection --------------------------------------------------------

    @property
    def num_variables(self) -> int:
        return len(self.variables)

    @property
    def num_constraints(self) -> int:
        return len(self.constraints)

    def variable_by_name(self, name: str) -> Variable:
        for var in self.variables:
            if var.name == name:
                return var
        raise ModelError(f"no variable named {name!r}")

    def validate(self) -> None:
        """Well-formedness audit: every symbol housed, finite continuous bounds."""
        for var in self.variables:
            if var.kind is VarKind.CONTINUOUS:
                # Fractions are always finite; the check guards future domains
                if var.lb is None or var.ub is None:
                    raise ModelError(f"continuous variable {var.name} lacks finite bounds")
        nvars = len(self.variables)
        for con in self.constraints:
            for vid, _ in con.terms:
                if not (0 <= vid < nvars):
                    raise ModelError(f"constraint {con.name} references id {vid}")
        for vid in self.objective_terms:
            if not (0 <= vid < nvars):
                raise ModelError(f"objective references id {vid}")
        if self.warm_start:
            for vid, value in self.warm_start.items():
                var = self.variables[vid]
                if not (var.lb <= value <= var.ub):
                    raise ModelError(f"warm start value outside domain of {var.name}")

    def evaluate_objective(self, assignment: dict) -> Fraction:
        """Exact rational objective value of a full assignment."""
        total = self.objective_offset
        for vid, coef in self.objective_terms.items():
            total += coef * _value_as_fraction(assignment[vid])
        return total


def _value_as_fraction(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    return Fraction(float(value))  # exact binary expansion of the float


def evaluate_constraint(con: LinearConstraint, assignment: dict) -> Fraction:
    """Exact left-hand-side value of a constraint under a full assignment."""
    total = Fraction(0)
    for vid, coef in con.terms:
        total += coef * _value_as_fraction(assignment[vid])
    return total


def constraint_satisfied(con: LinearConstraint, assignment: dict,
                         tol: Fraction = Fraction(1, 10 ** 6)) -> bool:
    lhs = evaluate_constraint(con, assignment)
    if con.sense is Sense.LE:
        return lhs <= con.rhs + tol
    if con.sense is Sense.GE:
        return lhs >= con.rhs - tol
    return abs(lhs - con.rhs) <= tol


# -- LP text export ---------------------------------------------------------

def _fmt_num(value: Fraction) -> str:
    f = float(value)
    if f == int(f) and abs(f) < 1e15:
        return str(int(f))
    return repr(f)


def _fmt_terms(terms, variables) -> str:
    if not terms:
        return "0 " + variables[0].name if variables else "0"
    parts = []
    for i, (vid, coef) in enumerate(terms):
        mag = _fmt_num(abs(coef))
        piece = f"{mag} {variables[vid].name}"
        if i == 0:
            parts.append(piece if coef > 0 else f"- {piece}")
        else:
            parts.append(f"+ {piece}" if coef > 0 else f"- {piece}")
    return " ".join(parts)


def export_lp(model: MilpModel) -> str:
    """Emit the model in the industry-standard LP text format.

    Sections: Minimize/Maximize, Subject To, Bounds, Binaries, Generals.
    Ordering follows variable/constraint ids, so identical models export
    byte-identical text.
    """
    model.validate()
    lines = []
    lines.append("\\ " + model.name)
    lines.append("Minimize" if model.direction is Direction.MINIMIZE else "Maximize")
    obj_terms = sorted(model.objective_terms.items())
    lines.append(" obj: " + _fmt_terms(obj_terms, model.variables))
    if model.objective_offset != 0:
        off = model.objective_offset
        lines[-1] += (" + " if off > 0 else " - ") + _fmt_num(abs(off))
    lines.append("Subject To")
    sense_txt = {Sense.LE: "<=", Sense.EQ: "=", Sense.GE: ">="}
    for con in model.constraints:
        body = _fmt_terms(list(con.terms), model.variables)
        lines.append(f" {con.name}: {body} {sense_txt[con.sense]} {_fmt_num(con.rhs)}")
    lines.append("Bounds")
    for var in model.variables:
        if var.kind is VarKind.BINARY:
            continue
        lines.append(f" {_fmt_num(var.lb)} <= {var.name} <= {_fmt_num(var.ub)}")
    binaries = [v.name for v in model.variables if v.kind is VarKind.BINARY]
    if binaries:
        lines.append("Binaries")
        for name in binaries:
            lines.append(f" {name}")
    generals = [v.name for v in model.variables if v.kind is VarKind.INTEGER]
    if generals:
        lines.append("Generals")
        for name in generals:
            lines.append(f" {name}")
    lines.append("End")
    return "\n".join(lines) + "\n"
