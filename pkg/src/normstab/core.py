"""Shared data types, CSV I/O, seed derivation and co-membership primitives."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np


class DataError(ValueError):
    """Malformed or unusable input data."""


class NumericalError(RuntimeError):
    """A numerical routine could not produce a valid result."""


@dataclass(frozen=True)
class DataMatrix:
    """n x p matrix of finite reals. Row index is the object's identity."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.array(self.values, dtype=float, copy=True)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.ndim != 2:
            raise DataError(f"data must be 2-D, got shape {arr.shape}")
        if arr.shape[0] < 2 or arr.shape[1] < 1:
            raise DataError(f"need n >= 2 and p >= 1, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            i, j = np.argwhere(~np.isfinite(arr))[0]
            raise DataError(f"non-finite value at row {i}, column {j}")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    def distinct_rows(self) -> int:
        return np.unique(self.values, axis=0).shape[0]

    @classmethod
    def coerce(cls, data) -> "DataMatrix":
        return data if isinstance(data, cls) else cls(data)


@dataclass(frozen=True)
class ClusterSizes:
    sizes: tuple[int, ...]

    @property
    def total(self) -> int:
        return sum(self.sizes)

    @property
    def has_empty(self) -> bool:
        return any(s == 0 for s in self.sizes)

    def nonempty(self) -> "ClusterSizes":
        return ClusterSizes(tuple(s for s in self.sizes if s > 0))


@dataclass(frozen=True)
class ClusterAssignment:
    """Labels in 1..k for the objects listed in ``covered_ids``."""

    labels: np.ndarray
    k: int
    covered_ids: np.ndarray = field(default=None)

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64).copy()
        if labels.ndim != 1:
            raise DataError("labels must be a vector")
        if self.covered_ids is None:
            ids = np.arange(labels.size, dtype=np.int64)
        else:
            ids = np.asarray(self.covered_ids, dtype=np.int64).copy()
        if ids.shape != labels.shape:
            raise DataError("labels and covered_ids differ in length")
        if ids.size and np.any(np.diff(ids) <= 0):
            order = np.argsort(ids, kind="stable")
            ids, labels = ids[order], labels[order]
            if np.any(np.diff(ids) == 0):
                raise DataError("covered_ids contains duplicates")
        if self.k < 1:
            raise DataError("k must be >= 1")
        if labels.size and (labels.min() < 1 or labels.max() > self.k):
            raise DataError(f"labels must lie in [1, {self.k}]")
        labels.setflags(write=False)
        ids.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "covered_ids", ids)

    def __len__(self) -> int:
        return self.labels.size

    @property
    def sizes(self) -> ClusterSizes:
        return ClusterSizes(tuple(int(c) for c in np.bincount(self.labels - 1, minlength=self.k)))

    @property
    def has_empty_cluster(self) -> bool:
        return self.sizes.has_empty

    def label_of(self, object_id: int) -> int:
        pos = np.searchsorted(self.covered_ids, object_id)
        if pos >= self.covered_ids.size or self.covered_ids[pos] != object_id:
            raise KeyError(f"object {object_id} not covered by this assignment")
        return int(self.labels[pos])

    def restrict(self, ids: Sequence[int]) -> "ClusterAssignment":
        ids = np.unique(np.asarray(ids, dtype=np.int64))
        pos = np.searchsorted(self.covered_ids, ids)
        ok = (pos < self.covered_ids.size)
        ok[ok] = self.covered_ids[pos[ok]] == ids[ok]
        if not np.all(ok):
            raise KeyError(f"objects {ids[~ok].tolist()} not covered")
        return ClusterAssignment(self.labels[pos], self.k, ids)


@dataclass(frozen=True)
class SeedSpec:
    """Master seed plus counter-based substream derivation.

    A substream is addressed by a tuple of non-negative integers; the same
    address always yields the same generator, independent of call order.
    """

    master_seed: int = 0

    def __post_init__(self):
        if not 0 <= int(self.master_seed) < 2**64:
            raise ValueError("master_seed must be an unsigned 64-bit integer")

    def sequence(self, *key: int) -> np.random.SeedSequence:
        return np.random.SeedSequence(int(self.master_seed), spawn_key=tuple(int(k) for k in key))

    def rng(self, *key: int) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(self.sequence(*key)))

    def child(self, *key: int) -> "SeedSpec":
        """Derive an independent master seed for a sub-experiment (e.g. one iteration)."""
        state = self.sequence(*key).generate_state(2, dtype=np.uint32)
        return SeedSpec(int(state[0]) | (int(state[1]) << 32))


# Substream tags. Keep them stable: changing a value changes every result.
STREAM_BOOTSTRAP = 1
STREAM_KMEANS = 2
STREAM_REDRAW = 3
STREAM_GAP = 10
STREAM_JUMP = 11
STREAM_SLOPE = 12
STREAM_GMM = 13
STREAM_SCENARIO = 20
STREAM_CHANCE = 30


def load_csv(path, has_header: bool = False) -> DataMatrix:
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    rows: list[list[float]] = []
    width = None
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for r, row in enumerate(reader):
            if r == 0 and has_header:
                continue
            if not row or all(not c.strip() for c in row):
                continue
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise DataError(f"ragged row {r + 1}: expected {width} fields, got {len(row)}")
            vals = []
            for c, cell in enumerate(row):
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(f"cannot parse {cell!r} at row {r + 1}, column {c + 1}") from None
                if not math.isfinite(v):
                    raise DataError(f"non-finite value {cell!r} at row {r + 1}, column {c + 1}")
                vals.append(v)
            rows.append(vals)
    if len(rows) < 2:
        raise DataError(f"{path}: need at least 2 rows, found {len(rows)}")
    return DataMatrix(np.array(rows))


def save_csv(path, data, header: Sequence[str] | None = None) -> None:
    """Write data in the dataset CSV format (round-trips exactly through load_csv)."""
    values = DataMatrix.coerce(data).values
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header is not None:
            w.writerow(header)
        for row in values:
            w.writerow([repr(float(v)) for v in row])


def co_membership(assignment: ClusterAssignment, i: int, j: int) -> bool:
    if i == j:
        raise ValueError("co_membership needs two distinct objects")
    return assignment.label_of(i) == assignment.label_of(j)


def _same_pairs(counts: np.ndarray) -> int:
    counts = counts.astype(np.int64)
    return int(np.sum(counts * (counts - 1)) // 2)


def disagreeing_pairs(labels_a: np.ndarray, labels_b: np.ndarray) -> int:
    """Number of unordered pairs on whose co-membership the two labelings disagree.

    Uses contingency counts, O(n + ka*kb); labels may be any non-negative ints.
    """
    la = np.asarray(labels_a, dtype=np.int64)
    lb = np.asarray(labels_b, dtype=np.int64)
    ka = int(la.max()) + 1
    kb = int(lb.max()) + 1
    same_a = _same_pairs(np.bincount(la, minlength=ka))
    same_b = _same_pairs(np.bincount(lb, minlength=kb))
    same_both = _same_pairs(np.bincount(la * kb + lb, minlength=ka * kb))
    return same_a + same_b - 2 * same_both


def pair_distance(a: ClusterAssignment, b: ClusterAssignment) -> float:
    """Fraction of object pairs on which the clusterings disagree about co-membership."""
    if a.covered_ids.shape != b.covered_ids.shape or not np.array_equal(a.covered_ids, b.covered_ids):
        raise DataError("assignments cover different objects")
    m = len(a)
    if m < 2:
        raise DataError("pair distance needs at least 2 covered objects")
    return disagreeing_pairs(a.labels, b.labels) / (m * (m - 1) // 2)
