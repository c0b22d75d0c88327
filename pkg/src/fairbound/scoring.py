"""Integer-coefficient scoring systems: MILP builders, decoding, evaluation.

The training model minimizes misclassifications plus a sparsity penalty; the
fairness model optimizes statistical parity or equal opportunity over the
predictions while capping sparsity and misclassification count.

Loss variables encode true misclassification under the tie rule sign(0) = -1:
for y=+1 an example is wrong iff its integer score s <= 0, for y=-1 iff
s >= 1.  The big-M pair is arranged per label so that the margin gamma=0.5
separates the two integer score regimes exactly and the standard constants
M1 = gamma + max|score|, M2 = max|score| stay valid and tight.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .dataio import BIAS_NAME, Dataset, GroupSpec
from .fairness import FairnessMetric, MetricError
from .milp_ir import Direction, MilpModel, Sense
from .solver import SolveResult

GAMMA = Fraction(1, 2)

# coefficient candidates used throughout the experiments (zero is implicit:
# it corresponds to selecting no candidate at all)
DEFAULT_VALUES = (1, -1, 2, -2, 5, -5, 10, -10, 20, -20, 30, -30, 50, -50)


class DecodeError(Exception):
    """Incumbent missing or inconsistent with the decoded model."""


@dataclass(frozen=True)
class CoefficientDomain:
    """Per-feature nonzero candidate values; an empty tuple pins the
    coefficient to zero."""

    values_per_feature: tuple   # tuple of tuples of ints

    def __post_init__(self):
        norm = []
        for j, values in enumerate(self.values_per_feature):
            vals = tuple(int(v) for v in values)
            if len(set(vals)) != len(vals):
                raise ValueError(f"duplicate candidate values for feature {j}")
            if any(v == 0 for v in vals):
                raise ValueError("zero is implicit and must not be listed")
            norm.append(vals)
        object.__setattr__(self, "values_per_feature", tuple(norm))

    @classmethod
    def uniform(cls, m: int, values: Sequence[int] = DEFAULT_VALUES):
        return cls(tuple(tuple(values) for _ in range(m)))

    @property
    def m(self) -> int:
        return len(self.values_per_feature)

    def max_abs(self, j: int) -> int:
        vals = self.values_per_feature[j]
        return max(abs(v) for v in vals) if vals else 0

    def configurations(self) -> int:
        total = 1
        for vals in self.values_per_feature:
            total *= len(vals) + 1
        return total


@dataclass(frozen=True)
class BigMData:
    gamma: Fraction
    m1: tuple   # per example, Fractions
    m2: tuple


@dataclass(frozen=True)
class ScoringSystem:
    """Decoded integer-coefficient model; bias (threshold) is the last slot."""

    coefficients: tuple
    feature_names: tuple

    def __post_init__(self):
        object.__setattr__(self, "coefficients",
                           tuple(int(c) for c in self.coefficients))
        if len(self.coefficients) != len(self.feature_names):
            raise ValueError("coefficient/name length mismatch")

    @property
    def nnz(self) -> int:
        return sum(1 for c in self.coefficients if c != 0)

    def score(self, x) -> int:
        x = np.asarray(x)
        if x.shape[-1] != len(self.coefficients):
            raise ValueError("feature dimension mismatch")
        return int(x @ np.array(self.coefficients))

    def predict(self, x) -> int:
        return 1 if self.score(x) > 0 else -1

    def predict_dataset(self, ds: Dataset) -> np.ndarray:
        scores = ds.features @ np.array(self.coefficients)
        return np.where(scores > 0, 1, -1).astype(np.int8)

    def to_json_dict(self) -> dict:
        out = {"class": "scoring"}
        coefs = {}
        threshold = 0
        for name, coef in zip(self.feature_names, self.coefficients):
            if name == BIAS_NAME:
                threshold = coef
            elif coef != 0:
                coefs[name] = coef
        out["coefficients"] = coefs
        out["threshold"] = threshold
        return out

    def render_text(self) -> str:
        rows = [(name, coef) for name, coef in
                zip(self.feature_names, self.coefficients)
                if coef != 0 and name != BIAS_NAME]
        threshold = 0
        if BIAS_NAME in self.feature_names:
            threshold = self.coefficients[self.feature_names.index(BIAS_NAME)]
        width = max([len(n) for n, _ in rows] + [len("threshold")])
        lines = [f"{'feature'.ljust(width)} | coefficient"]
        lines.append("-" * (width + 14))
        for name, coef in rows:
            lines.append(f"{name.ljust(width)} | {coef:+d}")
        lines.append(f"{'threshold'.ljust(width)} | {threshold:+d}")
        lines.append("predict +1 if the total score is > 0, else -1")
        return "\n".join(lines)


def scoring_system_from_json(payload: dict, feature_names: Sequence[str]) -> ScoringSystem:
    """Rebuild a scoring system against a dataset's feature layout."""
    coefs = dict(payload.get("coefficients", {}))
    unknown = [n for n in coefs if n not in feature_names]
    if unknown:
        raise DecodeError(f"model references features missing from dataset: {unknown}")
    values = [int(coefs.get(name, 0)) for name in feature_names]
    if BIAS_NAME in feature_names:
        values[list(feature_names).index(BIAS_NAME)] = int(payload.get("threshold", 0))
    return ScoringSystem(tuple(values), tuple(feature_names))


# -- formulation -------------------------------------------------------------

def compute_big_m(ds: Dataset, dom: CoefficientDomain,
                  gamma: Fraction = GAMMA) -> BigMData:
    """Per-example constants covering the largest attainable |score|."""
    if dom.m != ds.m:
        raise ValueError("domain size must match feature count")
    max_abs = np.array([dom.max_abs(j) for j in range(dom.m)], dtype=np.int64)
    reach = ds.features.astype(np.int64) @ max_abs
    m1 = tuple(gamma + int(r) for r in reach)
    m2 = tuple(Fraction(int(r)) for r in reach)
    return BigMData(gamma, m1, m2)


def _loss_pair(model: MilpModel, z_id: int, score_terms: list, y: int,
               m1: Fraction, m2: Fraction, gamma: Fraction, i: int) -> None:
    """Add the two constraints pinning z to 1[misclassified] for example i.

    `score_terms` carries the raw integer score s = x_i . lam.  With s
    integral and gamma in (0, 1):
      y=+1 (wrong iff s <= 0):  M1*z + s >= gamma   and   M2*z + s <= M2
      y=-1 (wrong iff s >= 1):  -M2*z + s <= gamma  and   s - M1*z >= gamma - M1
    """
    if y == 1:
        model.add_constraint([(z_id, m1)] + score_terms, Sense.GE, gamma,
                             name=f"loss_lo_{i}")
        model.add_constraint([(z_id, m2)] + score_terms, Sense.LE, m2,
                             name=f"loss_hi_{i}")
    else:
        model.add_constraint([(z_id, -m2)] + score_terms, Sense.LE, gamma,
                             name=f"loss_lo_{i}")
        model.add_constraint([(z_id, -m1)] + score_terms, Sense.GE, gamma - m1,
                             name=f"loss_hi_{i}")


def _base_model(ds: Dataset, dom: CoefficientDomain, name: str):
    if not ds.bias_appended:
        raise ValueError("scoring formulations require the bias column appended")
    model = MilpModel(name)
    big_m = compute_big_m(ds, dom)
    u_ids = {}
    lam_ids = []
    for j in range(ds.m):
        vals = dom.values_per_feature[j]
        lo = min(vals + (0,)) if vals else 0
        hi = max(vals + (0,)) if vals else 0
        lam_ids.append(model.add_integer(f"lam_{j}", lo, hi))
    for j in range(ds.m):
        for w in dom.values_per_feature[j]:
            u_ids[(j, w)] = model.add_binary(f"u_{j}_{w}")
    z_ids = [model.add_binary(f"z_{i}") for i in range(ds.n)]

    for j in range(ds.m):
        terms = [(lam_ids[j], 1)]
        terms += [(u_ids[(j, w)], -w) for w in dom.values_per_feature[j]]
        model.add_constraint(terms, Sense.EQ, 0, name=f"coef_link_{j}")
        choice = [(u_ids[(j, w)], 1) for w in dom.values_per_feature[j]]
        if choice:
            model.add_constraint(choice, Sense.LE, 1, name=f"coef_choice_{j}")

    X = ds.features
    for i in range(ds.n):
        active = np.flatnonzero(X[i])
        score_terms = [(lam_ids[int(j)], 1) for j in active]
        _loss_pair(model, z_ids[i], score_terms, int(ds.labels[i]),
                   big_m.m1[i], big_m.m2[i], big_m.gamma, i)

    meta = {"u_ids": u_ids, "lam_ids": lam_ids, "z_ids": z_ids,
            "dataset": ds, "domain": dom, "big_m": big_m}
    return model, meta


def build_training_milp(ds: Dataset, dom: CoefficientDomain, c_reg=0) -> MilpModel:
    """Minimize misclassification count plus c_reg * (number of nonzeros)."""
    model, meta = _base_model(ds, dom, "scoring_train")
    c_reg = c_reg if isinstance(c_reg, (int, Fraction)) else Fraction(float(c_reg))
    terms = [(z, 1) for z in meta["z_ids"]]
    if c_reg:
        terms += [(u, c_reg) for u in meta["u_ids"].values()]
    model.set_objective(terms, Direction.MINIMIZE)
    model.meta = meta
    model.validate()
    return model


def build_fairness_milp(ds: Dataset, dom: CoefficientDomain, groups: GroupSpec,
                        metric: FairnessMetric, direction: Direction,
                        alpha: int, loss_budget: int) -> MilpModel:
    """Optimize a fairness metric over the alpha-sparse, budget-feasible models.

    The objective equals the metric of the decoded model exactly; Max queries
    use the same terms under a Maximize sense.
    """
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    if loss_budget < 0:
        raise ValueError("loss_budget must be a nonnegative count")
    if metric is FairnessMetric.EQUAL_OPPORTUNITY and (
            len(groups.g1_pos) == 0 or len(groups.g2_pos) == 0):
        raise MetricError("equal opportunity undefined: a group has no positives")
    model, meta = _base_model(ds, dom, f"scoring_{metric.value}_{direction.value}")
    z_ids = meta["z_ids"]
    yhat_ids = [model.add_binary(f"yhat_{i}") for i in range(ds.n)]

    for i in range(ds.n):
        if int(ds.labels[i]) == 1:
            model.add_constraint([(yhat_ids[i], 1), (z_ids[i], 1)],
                                 Sense.EQ, 1, name=f"pred_link_{i}")
        else:
            model.add_constraint([(yhat_ids[i], 1), (z_ids[i], -1)],
                                 Sense.EQ, 0, name=f"pred_link_{i}")

    model.add_constraint([(u, 1) for u in meta["u_ids"].values()],
                         Sense.LE, alpha, name="sparsity")
    model.add_constraint([(z, 1) for z in z_ids],
                         Sense.LE, loss_budget, name="performance")

    if metric is FairnessMetric.STATISTICAL_PARITY:
        idx1, idx2 = groups.g1, groups.g2
    else:
        idx1, idx2 = groups.g1_pos, groups.g2_pos
    terms = [(yhat_ids[int(i)], Fraction(1, len(idx1))) for i in idx1]
    terms += [(yhat_ids[int(i)], Fraction(-1, len(idx2))) for i in idx2]
    model.set_objective(terms, direction)

    meta["yhat_ids"] = yhat_ids
    meta["metric"] = metric
    meta["groups"] = groups
    model.meta = meta
    model.validate()
    return model


# -- decoding ----------------------------------------------------------------

def decode_scoring_system(model: MilpModel, result: SolveResult) -> ScoringSystem:
    """Read coefficients off the incumbent and verify it is self-consistent.

    The decoded model's scores must reproduce the incumbent's z (loss) and
    yhat (prediction) variables exactly, and for fairness models the MILP
    objective must equal the metric recomputed from the decoded predictions.
    """
    if result.incumbent is None:
        raise DecodeError("no incumbent to decode")
    meta = getattr(model, "meta", None)
    if meta is None:
        raise DecodeError("model carries no scoring layout metadata")
    inc = result.incumbent
    ds: Dataset = meta["dataset"]
    dom: CoefficientDomain = meta["domain"]

    coefs = []
    for j in range(ds.m):
        val = sum(w * inc[meta["u_ids"][(j, w)]]
                  for w in dom.values_per_feature[j])
        lam = inc[meta["lam_ids"][j]]
        if lam != val:
            raise DecodeError(f"lambda_{j} inconsistent with selection variables")
        coefs.append(val)
    system = ScoringSystem(tuple(coefs), ds.feature_names)

    scores = ds.features.astype(np.int64) @ np.array(coefs, dtype=np.int64)
    preds = np.where(scores > 0, 1, -1)
    z_expect = (preds != ds.labels).astype(int)
    z_got = np.array([inc[z] for z in meta["z_ids"]])
    if not np.array_equal(z_expect, z_got):
        raise DecodeError("incumbent loss variables disagree with decoded scores")
    if "yhat_ids" in meta:
        yhat_got = np.array([inc[v] for v in meta["yhat_ids"]])
        if not np.array_equal((preds == 1).astype(int), yhat_got):
            raise DecodeError("incumbent predictions disagree with decoded scores")
        from .fairness import metric_exact
        value = metric_exact(meta["metric"], preds, meta["groups"])
        if result.objective_exact is not None and value != result.objective_exact:
            raise DecodeError("objective does not equal the decoded metric value")
    return system


def save_scoring_system(system: ScoringSystem, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(system.to_json_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
