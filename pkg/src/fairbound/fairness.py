"""Statistical fairness metrics and disagreement over prediction vectors.

Everything is computed in exact rational arithmetic (integer counts over
integer group sizes); the float-returning wrappers convert at the interface.
Positive values favor group 1, negative values favor group 2.
"""

from __future__ import annotations

import enum
from fractions import Fraction

import numpy as np

from .dataio import Dataset, GroupSpec


class MetricError(Exception):
    """Metric undefined for the given groups (e.g. no positives in a group)."""


class FairnessMetric(enum.Enum):
    STATISTICAL_PARITY = "sp"
    EQUAL_OPPORTUNITY = "eo"


def as_prediction_vector(values, n: int = None) -> np.ndarray:
    preds = np.asarray(values, dtype=np.int8)
    if preds.ndim != 1:
        raise ValueError("predictions must be a vector")
    if not np.isin(preds, (-1, 1)).all():
        raise ValueError("predictions must take values in {-1, +1}")
    if n is not None and len(preds) != n:
        raise ValueError(f"prediction vector length {len(preds)} != N={n}")
    return preds


def _positive_rate(preds: np.ndarray, idx: np.ndarray) -> Fraction:
    if len(idx) == 0:
        raise MetricError("empty group")
    return Fraction(int((preds[idx] == 1).sum()), len(idx))


def statistical_parity_exact(preds, groups: GroupSpec) -> Fraction:
    """Difference in positive prediction rates between the two groups."""
    n = max(int(groups.g1.max()), int(groups.g2.max())) + 1
    p = as_prediction_vector(preds)
    if len(p) < n:
        raise ValueError("prediction vector shorter than group indices require")
    return _positive_rate(p, groups.g1) - _positive_rate(p, groups.g2)


def equal_opportunity_exact(preds, groups: GroupSpec) -> Fraction:
    """Difference in true positive rates, i.e. positive rates on G1+, G2+."""
    if len(groups.g1_pos) == 0 or len(groups.g2_pos) == 0:
        raise MetricError("equal opportunity undefined: a group has no positives")
    p = as_prediction_vector(preds)
    return _positive_rate(p, groups.g1_pos) - _positive_rate(p, groups.g2_pos)


def statistical_parity(preds, groups: GroupSpec) -> float:
    return float(statistical_parity_exact(preds, groups))


def equal_opportunity(preds, groups: GroupSpec) -> float:
    return float(equal_opportunity_exact(preds, groups))


def metric_exact(kind: FairnessMetric, preds, groups: GroupSpec) -> Fraction:
    if kind is FairnessMetric.STATISTICAL_PARITY:
        return statistical_parity_exact(preds, groups)
    return equal_opportunity_exact(preds, groups)


def empirical_loss_exact(preds, ds: Dataset) -> Fraction:
    """0/1 loss: fraction of examples whose prediction disagrees with the label."""
    p = as_prediction_vector(preds, ds.n)
    return Fraction(int((p != ds.labels).sum()), ds.n)


def empirical_loss(preds, ds: Dataset) -> float:
    return float(empirical_loss_exact(preds, ds))


def disagreement_exact(p1, p2) -> Fraction:
    a = as_prediction_vector(p1)
    b = as_prediction_vector(p2)
    if len(a) != len(b):
        raise ValueError(f"length mismatch: {len(a)} vs {len(b)}")
    return Fraction(int((a != b).sum()), len(a))


def disagreement(p1, p2) -> float:
    return float(disagreement_exact(p1, p2))
