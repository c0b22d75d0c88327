"""Dataset loading, binarization, splitting, and protected-group definition.

Datasets are immutable once constructed: binary feature matrix (0/1 cells),
labels in {-1, +1}, named columns, optional all-ones bias column appended as
the last feature.  All randomness flows through an explicit splitmix64
generator so splits reproduce bit-for-bit across platforms.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional

import numpy as np

BIAS_NAME = "__bias__"


class DataError(Exception):
    """Malformed input data: missing columns, unparsable cells, empty files."""


class GroupError(Exception):
    """Protected-group construction failed (unknown feature, empty group)."""


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray          # N x M, values in {0, 1}
    labels: np.ndarray            # N, values in {-1, +1}
    feature_names: tuple
    bias_appended: bool = False

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.int8)
        labs = np.asarray(self.labels, dtype=np.int8)
        if feats.ndim != 2:
            raise DataError("features must be a 2-d matrix")
        if labs.ndim != 1 or labs.shape[0] != feats.shape[0]:
            raise DataError("labels length must match feature rows")
        if feats.shape[0] < 1:
            raise DataError("dataset needs at least one example")
        if not np.isin(feats, (0, 1)).all():
            raise DataError("features must be binary 0/1")
        if not np.isin(labs, (-1, 1)).all():
            raise DataError("labels must be -1/+1")
        if len(self.feature_names) != feats.shape[1]:
            raise DataError("feature_names length must match feature columns")
        if self.bias_appended:
            if self.feature_names[-1] != BIAS_NAME or not (feats[:, -1] == 1).all():
                raise DataError("bias column must be all-ones and named last")
        feats.setflags(write=False)
        labs.setflags(write=False)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labs)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def m(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class GroupSpec:
    """Index sets for two protected groups plus their positive-label subsets."""

    g1: np.ndarray
    g2: np.ndarray
    g1_pos: np.ndarray
    g2_pos: np.ndarray

    def __post_init__(self):
        for name in ("g1", "g2", "g1_pos", "g2_pos"):
            arr = np.asarray(getattr(self, name), dtype=np.int64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if len(self.g1) == 0 or len(self.g2) == 0:
            raise GroupError("both groups must be nonempty")
        if np.intersect1d(self.g1, self.g2).size:
            raise GroupError("groups must be disjoint")
        if not np.isin(self.g1_pos, self.g1).all() or not np.isin(self.g2_pos, self.g2).all():
            raise GroupError("positive subsets must lie inside their groups")

    def swapped(self) -> "GroupSpec":
        return GroupSpec(self.g2, self.g1, self.g2_pos, self.g1_pos)


@dataclass(frozen=True)
class SplitSpec:
    train_size: int
    seed: int

    def __post_init__(self):
        if self.train_size < 1:
            raise ValueError("train_size must be positive")
        if not (0 <= self.seed < 2 ** 64):
            raise ValueError("seed must fit in 64 bits")


def splitmix64(seed: int):
    """Documented 64-bit PRNG stream; identical output on every platform."""
    state = seed & 0xFFFFFFFFFFFFFFFF
    mask = 0xFFFFFFFFFFFFFFFF
    while True:
        state = (state + 0x9E3779B97F4A7C15) & mask
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & mask
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & mask
        yield z ^ (z >> 31)


def _fisher_yates(n: int, seed: int) -> np.ndarray:
    rng = splitmix64(seed)
    perm = np.arange(n)
    for i in range(n - 1, 0, -1):
        j = next(rng) % (i + 1)
        perm[i], perm[j] = perm[j], perm[i]
    return perm


# -- binarization -----------------------------------------------------------

def _is_binary(values) -> bool:
    return set(values) <= {"0", "1"}


def _as_floats(values) -> Optional[np.ndarray]:
    try:
        return np.array([float(v) for v in values])
    except ValueError:
        return None


def binarize_columns(columns: dict) -> tuple:
    """Turn raw string columns into binary indicator columns.

    Rules: 0/1 columns pass through; numeric columns become threshold
    indicators at the 25/50/75% empirical quantiles (duplicate thresholds
    dropped); anything else is one-hot encoded per distinct level.
    Applying the function to its own output changes nothing.
    """
    out_cols = []
    out_names = []
    for name, values in columns.items():
        for v in values:
            if v == "":
                raise DataError(f"empty cell in column {name!r}")
        if _is_binary(values):
            out_cols.append(np.array([int(v) for v in values], dtype=np.int8))
            out_names.append(name)
            continue
        numeric = _as_floats(values)
        if numeric is not None:
            seen = set()
            for q in (0.25, 0.50, 0.75):
                thr = float(np.quantile(numeric, q))
                if thr in seen:
                    continue
                seen.add(thr)
                out_cols.append((numeric >= thr).astype(np.int8))
                out_names.append(f"{name}>={thr:g}")
            continue
        levels = sorted(set(values))
        for level in levels:
            out_cols.append(np.array([1 if v == level else 0 for v in values],
                                     dtype=np.int8))
            out_names.append(f"{name}={level}")
    matrix = np.column_stack(out_cols) if out_cols else np.zeros((len(next(iter(columns.values()), [])), 0), dtype=np.int8)
    return matrix, out_names


def load_csv(path, label_column: str, positive_label: str) -> Dataset:
    """Load a UTF-8 header CSV, binarize features, map labels to {-1, +1}."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            rows = list(reader)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise DataError(f"{path}: empty file")
    header = rows[0]
    if label_column not in header:
        raise DataError(f"{path}: missing label column {label_column!r}")
    body = rows[1:]
    if not body:
        raise DataError(f"{path}: no data rows")
    width = len(header)
    for idx, row in enumerate(body):
        if len(row) != width:
            raise DataError(f"{path}: row {idx + 2} has {len(row)} cells, expected {width}")
    label_idx = header.index(label_column)
    labels = np.array([1 if row[label_idx] == positive_label else -1 for row in body],
                      dtype=np.int8)
    columns = {name: [row[i] for row in body]
               for i, name in enumerate(header) if i != label_idx}
    matrix, names = binarize_columns(columns)
    return Dataset(matrix, labels, tuple(names))


def from_arrays(features, labels, feature_names=None,
                bias_appended: bool = False) -> Dataset:
    feats = np.asarray(features)
    if feature_names is None:
        feature_names = tuple(f"f{i}" for i in range(feats.shape[1]))
    return Dataset(feats, labels, tuple(feature_names), bias_appended)


# -- operations --------------------------------------------------------------

def append_bias(ds: Dataset) -> Dataset:
    """Append the all-ones threshold column as the last feature."""
    if ds.bias_appended:
        raise DataError("bias column already appended")
    ones = np.ones((ds.n, 1), dtype=np.int8)
    feats = np.hstack([ds.features, ones])
    return Dataset(feats, ds.labels, ds.feature_names + (BIAS_NAME,), True)


def split(ds: Dataset, spec: SplitSpec) -> tuple:
    """Deterministic shuffle split; row order follows the permutation."""
    if spec.train_size >= ds.n:
        raise ValueError(f"train_size {spec.train_size} must be < N={ds.n}")
    perm = _fisher_yates(ds.n, spec.seed)
    tr, te = perm[:spec.train_size], perm[spec.train_size:]
    train = Dataset(ds.features[tr], ds.labels[tr], ds.feature_names, ds.bias_appended)
    test = Dataset(ds.features[te], ds.labels[te], ds.feature_names, ds.bias_appended)
    return train, test


def groups_from_feature(ds: Dataset, feature_name: str) -> GroupSpec:
    """g1 = rows with the feature set, g2 = the complement."""
    if feature_name not in ds.feature_names:
        raise GroupError(f"unknown feature {feature_name!r}")
    col = ds.features[:, ds.feature_names.index(feature_name)]
    g1 = np.flatnonzero(col == 1)
    g2 = np.flatnonzero(col == 0)
    if len(g1) == 0 or len(g2) == 0:
        raise GroupError(f"feature {feature_name!r} yields an empty group")
    pos = ds.labels == 1
    return GroupSpec(g1, g2, g1[pos[g1]], g2[pos[g2]])


def majority_loss(ds: Dataset) -> Fraction:
    """Loss of the best constant predictor: min class share."""
    pos = int((ds.labels == 1).sum())
    return Fraction(min(pos, ds.n - pos), ds.n)
