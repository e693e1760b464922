"""Lloyd's k-means with random restarts, nearest-centroid assignment and W(k)."""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .core import ClusterAssignment, DataError, DataMatrix, NumericalError

INIT_RANDOM = "random-points"
INIT_PLUSPLUS = "kmeans-plus-plus"


@dataclass(frozen=True)
class KMeansConfig:
    restarts: int = 10
    max_iterations: int = 100
    tolerance: float = 1e-8
    init: str = INIT_RANDOM

    def __post_init__(self):
        if self.restarts < 1 or self.max_iterations < 1 or not self.tolerance > 0:
            raise ValueError("restarts, max_iterations must be >= 1 and tolerance > 0")
        if self.init not in (INIT_RANDOM, INIT_PLUSPLUS):
            raise ValueError(f"unknown init {self.init!r}")


@dataclass(frozen=True)
class KMeansModel:
    centroids: np.ndarray
    inertia: float
    converged: bool
    iterations_used: int

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    @property
    def p(self) -> int:
        return self.centroids.shape[1]


@numba.njit(cache=True)
def _nearest(X, C, labels, dist):
    """Label each row with its nearest centroid (lowest index on ties).

    Returns (total squared distance, number of changed labels)."""
    n, p = X.shape
    k = C.shape[0]
    changed = 0
    for i in range(n):
        best = np.inf
        arg = 0
        for j in range(k):
            d = 0.0
            for q in range(p):
                t = X[i, q] - C[j, q]
                d += t * t
            if d < best:
                best = d
                arg = j
        if labels[i] != arg:
            changed += 1
            labels[i] = arg
        dist[i] = best
    return changed


@numba.njit(cache=True)
def _lloyd(X, w, C, max_iter, tol):
    """Weighted Lloyd iterations starting from centroids C (modified in place).

    Returns labels, inertia, iterations, converged, monotone."""
    n, p = X.shape
    k = C.shape[0]
    labels = np.full(n, -1, dtype=np.int64)
    dist = np.empty(n)
    sums = np.empty((k, p))
    counts = np.empty(k)
    _nearest(X, C, labels, dist)
    inertia = 0.0
    scale = 0.0  # rounding slack for the monotonicity check
    for i in range(n):
        inertia += w[i] * dist[i]
        for q in range(p):
            scale += w[i] * X[i, q] * X[i, q]
    slack = 1e-14 * scale + 1e-300
    converged = False
    monotone = True
    it = 0
    while it < max_iter:
        it += 1
        # update step
        sums[:, :] = 0.0
        counts[:] = 0.0
        for i in range(n):
            counts[labels[i]] += w[i]
            for q in range(p):
                sums[labels[i], q] += w[i] * X[i, q]
        for j in range(k):
            if counts[j] == 0.0:
                # re-seed at the point farthest from its centroid, taking it from its cluster
                far = -1
                fd = -1.0
                for i in range(n):
                    if dist[i] > fd and counts[labels[i]] > w[i]:
                        fd = dist[i]
                        far = i
                if far < 0:
                    continue
                old = labels[far]
                counts[old] -= w[far]
                for q in range(p):
                    sums[old, q] -= w[far] * X[far, q]
                    sums[j, q] = w[far] * X[far, q]
                counts[j] = w[far]
                labels[far] = j
                dist[far] = 0.0
        for j in range(k):
            if counts[j] > 0.0:
                for q in range(p):
                    C[j, q] = sums[j, q] / counts[j]
        changed = _nearest(X, C, labels, dist)
        new_inertia = 0.0
        for i in range(n):
            new_inertia += w[i] * dist[i]
        if new_inertia > inertia * (1.0 + 1e-12) + slack:
            monotone = False
        if changed == 0 or (inertia - new_inertia) <= tol * inertia:
            inertia = new_inertia
            converged = True
            break
        inertia = new_inertia
    return labels, inertia, it, converged, monotone


@numba.njit(cache=True)
def _restarts(X, w, starts, max_iter, tol):
    """Run Lloyd from each row-index start set; keep the lowest-inertia run.

    starts: (restarts, k) int array of row indices into X."""
    r, k = starts.shape
    p = X.shape[1]
    best_inertia = np.inf
    best_C = np.empty((k, p))
    best_labels = np.zeros(X.shape[0], dtype=np.int64)
    best_it = 0
    best_conv = False
    all_monotone = True
    worst_gap = 0.0
    inertias = np.empty(r)
    for s in range(r):
        C = np.empty((k, p))
        for j in range(k):
            for q in range(p):
                C[j, q] = X[starts[s, j], q]
        labels, inertia, it, conv, mono = _lloyd(X, w, C, max_iter, tol)
        inertias[s] = inertia
        if not mono:
            all_monotone = False
        if inertia < best_inertia:
            best_inertia = inertia
            best_C[:, :] = C
            best_labels[:] = labels
            best_it = it
            best_conv = conv
    return best_C, best_labels, best_inertia, best_it, best_conv, all_monotone, inertias


def _plusplus_starts(X, w, k, restarts, rng):
    n = X.shape[0]
    starts = np.empty((restarts, k), dtype=np.int64)
    for s in range(restarts):
        first = rng.choice(n, p=w / w.sum())
        chosen = [first]
        d2 = np.sum((X - X[first]) ** 2, axis=1)
        for _ in range(1, k):
            pr = w * d2
            tot = pr.sum()
            nxt = rng.choice(n, p=pr / tot) if tot > 0 else rng.choice(np.setdiff1d(np.arange(n), chosen))
            chosen.append(nxt)
            d2 = np.minimum(d2, np.sum((X - X[nxt]) ** 2, axis=1))
        starts[s] = chosen
    return starts


def start_indices(n_distinct: int, k: int, restarts: int, rng: np.random.Generator) -> np.ndarray:
    """k distinct row indices per restart, uniformly at random."""
    return np.argsort(rng.random((restarts, n_distinct)), axis=1)[:, :k]


def fit_weighted(X: np.ndarray, w: np.ndarray, k: int, config: KMeansConfig, rng: np.random.Generator):
    """k-means on distinct rows X with multiplicities w.

    Returns (centroids, labels over X, inertia, iterations, converged)."""
    n = X.shape[0]
    if k < 1:
        raise DataError("k must be >= 1")
    if k > n:
        raise DataError(f"k={k} exceeds the {n} distinct rows")
    if config.init == INIT_RANDOM:
        starts = start_indices(n, k, config.restarts, rng)
    else:
        starts = _plusplus_starts(X, w, k, config.restarts, rng)
    C, labels, inertia, it, conv, mono, _ = _restarts(
        X, w, starts, config.max_iterations, config.tolerance
    )
    if not mono:
        raise NumericalError("Lloyd iteration increased inertia")
    return C, labels, inertia, it, conv


def fit(data, k: int, config: KMeansConfig | None = None, rng: np.random.Generator | None = None) -> KMeansModel:
    """Best-of-restarts Lloyd k-means on the rows of ``data``.

    Duplicate rows are collapsed into weights first, so a random start never
    picks two identical points.
    """
    config = config or KMeansConfig()
    rng = rng if rng is not None else np.random.default_rng()
    X = DataMatrix.coerce(data).values
    uniq, counts = np.unique(X, axis=0, return_counts=True)
    C, _, inertia, it, conv = fit_weighted(uniq, counts.astype(float), k, config, rng)
    return KMeansModel(C, float(inertia), bool(conv), int(it))


@numba.njit(cache=True)
def nearest_labels(X, C):
    n = X.shape[0]
    labels = np.full(n, -1, dtype=np.int64)
    dist = np.empty(n)
    _nearest(X, C, labels, dist)
    return labels


def assign(model: KMeansModel, data) -> ClusterAssignment:
    """Label every row by its nearest centroid; ties go to the lowest index."""
    X = DataMatrix.coerce(data).values
    if X.shape[1] != model.p:
        raise DataError(f"model has p={model.p}, data has p={X.shape[1]}")
    labels = nearest_labels(X, np.ascontiguousarray(model.centroids))
    return ClusterAssignment(labels + 1, model.k)


def within_dispersion(data, assignment: ClusterAssignment) -> float:
    """Pooled within-cluster dissimilarity sum_r (1 / 2 n_r) sum_{i,j in r} ||x_i - x_j||^2.

    Computed through the identity with squared deviations from cluster means.
    """
    X = DataMatrix.coerce(data).values
    if len(assignment) == 0:
        raise DataError("empty assignment")
    if len(assignment) != X.shape[0]:
        raise DataError("assignment must cover every row")
    X = X[assignment.covered_ids]
    labels = assignment.labels - 1
    counts = np.bincount(labels, minlength=assignment.k).astype(float)
    sums = np.zeros((assignment.k, X.shape[1]))
    np.add.at(sums, labels, X)
    nz = counts > 0
    means = np.zeros_like(sums)
    means[nz] = sums[nz] / counts[nz, None]
    return float(np.sum((X - means[labels]) ** 2))
