"""Chance-level co-membership and the normalized clustering distance.

The probability that two fixed objects share a cluster under random
allocation with cluster sizes M = (n_1, ..., n_K) is N_pair / N_tot where

    N_tot  = prod_i C(m_i, n_i),            m_i = n_i + n_{i+1} + ... + n_K
    N_pair = sum_{i: n_i >= 2} C(m - 2, n_i - 2) * prod_{j != i} C(m'_j, n_j)

and m'_j are the same sequential remaining-object counts taken over the
clusters other than i (the pair and its n_i - 2 companions are committed
first). Everything runs on log-binomials so large m cannot overflow.
"""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
from scipy.special import gammaln

from .core import ClusterSizes, DataError


def _validate(sizes) -> np.ndarray:
    n = np.asarray(sizes.sizes if isinstance(sizes, ClusterSizes) else sizes, dtype=np.int64)
    if n.ndim != 1 or n.size == 0:
        raise DataError("cluster sizes must be a non-empty vector")
    if np.any(n < 1):
        raise DataError(f"empty cluster in sizes {n.tolist()}")
    if n.sum() < 2:
        raise DataError("need at least 2 objects")
    return n


def _log_binom(a, b):
    return gammaln(a + 1.0) - gammaln(b + 1.0) - gammaln(a - b + 1.0)


def log_chance_counts(sizes) -> tuple[float, np.ndarray]:
    """log N_tot and the per-cluster log terms of N_pair (-inf where n_i < 2)."""
    n = _validate(sizes).astype(float)
    m = n.sum()
    suffix = np.cumsum(n[::-1])[::-1]
    log_tot = float(np.sum(_log_binom(suffix, n)))

    K = n.size
    # remaining[i, j]: objects still unplaced when cluster j is filled, with cluster i removed
    upper = np.triu(np.ones((K, K)), 0).T  # upper[i, j] = 1 if i >= j
    remaining = suffix[None, :] - n[:, None] * upper
    with np.errstate(invalid="ignore", divide="ignore"):
        terms = _log_binom(remaining, np.broadcast_to(n, (K, K)))
    np.fill_diagonal(terms, 0.0)
    rest = terms.sum(axis=1)
    with np.errstate(invalid="ignore"):
        head = np.where(n >= 2, _log_binom(m - 2.0, np.maximum(n - 2.0, 0.0)), -np.inf)
    return log_tot, head + rest


def chance_same_cluster(sizes) -> float:
    """Probability that two given objects land in the same cluster by chance."""
    log_tot, log_pair = log_chance_counts(sizes)
    finite = np.isfinite(log_pair)
    if not finite.any():
        return 0.0
    p = float(np.sum(np.exp(log_pair[finite] - log_tot)))
    return min(max(p, 0.0), 1.0)


def chance_counts_exact(sizes) -> tuple[int, int]:
    """(N_pair, N_tot) as exact integers, same sequential scheme as the log version."""
    n = [int(v) for v in _validate(sizes)]
    m = sum(n)

    def sequential(parts):
        total, left = 1, sum(parts)
        for part in parts:
            total *= math.comb(left, part)
            left -= part
        return total

    n_tot = sequential(n)
    n_pair = 0
    for i, ni in enumerate(n):
        if ni >= 2:
            n_pair += math.comb(m - 2, ni - 2) * sequential(n[:i] + n[i + 1:])
    return n_pair, n_tot


def chance_same_cluster_exact(sizes) -> Fraction:
    n_pair, n_tot = chance_counts_exact(sizes)
    return Fraction(n_pair, n_tot)


def chance_distance(sizes_a, sizes_b) -> float:
    """Expected clustering distance when both clusterings allocate at random."""
    pa = chance_same_cluster(sizes_a)
    pb = chance_same_cluster(sizes_b)
    return pa * (1.0 - pb) + pb * (1.0 - pa)


def normalize_distance(d: float, d_r: float) -> float:
    """d / d_r, with 0/0 -> 0 and d/0 -> inf for d > 0."""
    if d_r == 0.0:
        return 0.0 if d == 0.0 else math.inf
    return d / d_r
