"""Bootstrap clustering instability (model-based and model-free) and k selection."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .core import (
    STREAM_BOOTSTRAP,
    STREAM_KMEANS,
    STREAM_REDRAW,
    ClusterSizes,
    DataError,
    DataMatrix,
    SeedSpec,
    disagreeing_pairs,
)
from .kmeans import KMeansConfig, fit_weighted, nearest_labels
from .normalize import chance_same_cluster

MODEL_BASED = "model-based"
MODEL_FREE = "model-free"
MODES = (MODEL_BASED, MODEL_FREE)
MAX_REDRAWS = 100


@dataclass(frozen=True)
class InstabilityConfig:
    k_min: int = 2
    k_max: int = 50
    bootstraps: int = 100
    mode: str = MODEL_BASED
    normalize: bool = True
    kmeans: KMeansConfig = field(default_factory=KMeansConfig)
    seed: SeedSpec = field(default_factory=SeedSpec)

    def __post_init__(self):
        if self.k_min < 2 or self.k_max < self.k_min:
            raise ValueError(f"invalid k range {self.k_min}..{self.k_max}")
        if self.bootstraps < 1:
            raise ValueError("need at least one bootstrap pair")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")

    @property
    def k_range(self) -> range:
        return range(self.k_min, self.k_max + 1)


@dataclass
class PairRun:
    """Per-bootstrap-pair results for one k and one mode.

    Skipped (degenerate) pairs hold NaN in every array.
    """

    k: int
    mode: str
    raw: np.ndarray
    chance: np.ndarray | None = None
    normalized: np.ndarray | None = None
    sizes: list[tuple[ClusterSizes, ClusterSizes] | None] | None = None

    @property
    def degenerate(self) -> int:
        return int(np.isnan(self.raw).sum())

    @property
    def raw_mean(self) -> float:
        vals = self.raw[~np.isnan(self.raw)]
        return float(vals.mean()) if vals.size else math.nan

    @property
    def raw_sd(self) -> float:
        vals = self.raw[~np.isnan(self.raw)]
        return float(vals.std(ddof=1)) if vals.size > 1 else 0.0

    @property
    def normalized_mean(self) -> float | None:
        if self.normalized is None:
            return None
        vals = self.normalized[~np.isnan(self.normalized)]
        return float(vals.mean()) if vals.size else math.nan


@dataclass
class InstabilityPath:
    mode: str
    runs: dict[int, PairRun]

    @property
    def ks(self) -> list[int]:
        return sorted(self.runs)

    def raw_means(self) -> dict[int, float]:
        return {k: self.runs[k].raw_mean for k in self.ks}

    def normalized_means(self) -> dict[int, float]:
        out = {}
        for k in self.ks:
            v = self.runs[k].normalized_mean
            if v is None:
                raise ValueError("path was computed without normalization")
            out[k] = v
        return out

    def scores(self, normalized: bool) -> dict[int, float]:
        return self.normalized_means() if normalized else self.raw_means()

    def select(self, normalized: bool) -> "SelectionResult":
        name = self.mode + (" (N)" if normalized else "")
        return select_k(self.scores(normalized), method=name)


@dataclass(frozen=True)
class SelectionResult:
    k_hat: int
    method: str
    path: dict[int, float]
    diagnostics: tuple[str, ...] = ()
    extras: dict = field(default_factory=dict)


def select_k(scores: Mapping[int, float], method: str = "instability") -> SelectionResult:
    """argmin over k; ties go to the smallest k, +inf scores never win unless all are inf."""
    if not scores:
        raise ValueError("empty score path")
    items = sorted(scores.items())
    if any(math.isnan(v) for _, v in items):
        raise ValueError(f"NaN in score path for method {method}")
    best_k, best_v = items[0]
    for k, v in items[1:]:
        if v < best_v:
            best_k, best_v = k, v
    return SelectionResult(best_k, method, dict(items))


def bootstrap_pair(n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Two independent size-n draws with replacement of row ids 0..n-1."""
    if n < 2:
        raise DataError("bootstrap needs n >= 2")
    return rng.integers(0, n, size=n), rng.integers(0, n, size=n)


class _Prepared:
    """Data with duplicate rows collapsed, shared by all bootstrap fits."""

    def __init__(self, data: DataMatrix):
        self.X = np.ascontiguousarray(data.values)
        self.n = data.n
        self.uniq, self.key = np.unique(self.X, axis=0, return_inverse=True)
        self.key = self.key.reshape(-1)
        self.n_distinct = self.uniq.shape[0]

    def distinct_in(self, ids: np.ndarray) -> int:
        return np.unique(self.key[ids]).size


def _draws(prep: _Prepared, config: InstabilityConfig, b: int) -> tuple[np.ndarray, np.ndarray]:
    return bootstrap_pair(prep.n, config.seed.rng(STREAM_BOOTSTRAP, b))


def _ensure_distinct(prep: _Prepared, ids: np.ndarray, k: int, seed: SeedSpec, b: int, side: int) -> np.ndarray:
    if prep.distinct_in(ids) >= k:
        return ids
    rng = seed.rng(STREAM_REDRAW, b, k, side)
    for _ in range(MAX_REDRAWS):
        ids = rng.integers(0, prep.n, size=prep.n)
        if prep.distinct_in(ids) >= k:
            return ids
    raise DataError(f"could not draw a bootstrap sample with {k} distinct rows in {MAX_REDRAWS} tries")


def _cluster_sample(prep: _Prepared, ids: np.ndarray, k: int, config: InstabilityConfig, b: int, side: int):
    """Fit k-means on a bootstrap sample; return nearest-centroid labels for every row."""
    w = np.bincount(prep.key[ids], minlength=prep.n_distinct).astype(float)
    present = np.flatnonzero(w)
    rng = config.seed.rng(STREAM_KMEANS, b, k, side)
    C, _, _, _, _ = fit_weighted(prep.uniq[present], w[present], k, config.kmeans, rng)
    return nearest_labels(prep.X, C)


def _sizes(labels: np.ndarray) -> np.ndarray:
    counts = np.bincount(labels)
    return counts[counts > 0]


def _pair_values(la: np.ndarray, lb: np.ndarray, normalize: bool):
    m = la.size
    raw = disagreeing_pairs(la, lb) / (m * (m - 1) // 2)
    if not normalize:
        return raw, None, None, None
    sa, sb = _sizes(la), _sizes(lb)
    pa, pb = chance_same_cluster(sa), chance_same_cluster(sb)
    d_r = pa * (1.0 - pb) + pb * (1.0 - pa)
    if d_r == 0.0:
        d_n = 0.0 if raw == 0.0 else math.inf
    else:
        d_n = raw / d_r
    return raw, d_r, d_n, (sa, sb)


def _run_k(prep: _Prepared, k: int, config: InstabilityConfig, modes: Iterable[str],
           bootstraps: int, keep_sizes: bool) -> dict[str, PairRun]:
    if k > prep.n_distinct:
        raise DataError(f"k={k} exceeds the {prep.n_distinct} distinct rows")
    modes = tuple(modes)
    B = bootstraps
    out = {}
    for mode in modes:
        out[mode] = PairRun(
            k, mode, np.full(B, np.nan),
            np.full(B, np.nan) if config.normalize else None,
            np.full(B, np.nan) if config.normalize else None,
            [None] * B if (config.normalize and keep_sizes) else None,
        )
    for b in range(B):
        ids_a, ids_b = _draws(prep, config, b)
        ids_a = _ensure_distinct(prep, ids_a, k, config.seed, b, 0)
        ids_b = _ensure_distinct(prep, ids_b, k, config.seed, b, 1)
        la = _cluster_sample(prep, ids_a, k, config, b, 0)
        lb = _cluster_sample(prep, ids_b, k, config, b, 1)
        for mode in modes:
            if mode == MODEL_BASED:
                xa, xb = la, lb
            else:
                common = np.intersect1d(ids_a, ids_b)
                if common.size < 2:
                    continue
                xa, xb = la[common], lb[common]
            raw, d_r, d_n, sizes = _pair_values(xa, xb, config.normalize)
            run = out[mode]
            run.raw[b] = raw
            if config.normalize:
                run.chance[b] = d_r
                run.normalized[b] = d_n
                if run.sizes is not None:
                    run.sizes[b] = tuple(ClusterSizes(tuple(int(v) for v in s)) for s in sizes)
    return out


def model_based_instability(data, k: int, config: InstabilityConfig, keep_sizes: bool = True) -> PairRun:
    """Fit on each bootstrap sample, assign the full data, compare all n(n-1)/2 pairs."""
    prep = _Prepared(DataMatrix.coerce(data))
    return _run_k(prep, k, config, (MODEL_BASED,), config.bootstraps, keep_sizes)[MODEL_BASED]


def model_free_instability(data, k: int, config: InstabilityConfig, keep_sizes: bool = True) -> PairRun:
    """Cluster each bootstrap sample, compare only objects drawn into both samples."""
    prep = _Prepared(DataMatrix.coerce(data))
    return _run_k(prep, k, config, (MODEL_FREE,), config.bootstraps, keep_sizes)[MODEL_FREE]


def instability_paths(data, config: InstabilityConfig, modes: Iterable[str] = MODES) -> dict[str, InstabilityPath]:
    """Paths for several modes from one set of bootstrap fits.

    Each mode's path is identical to what ``instability_path`` returns for it
    alone, since fits depend only on (seed, b, k, side).
    """
    data = DataMatrix.coerce(data)
    prep = _Prepared(data)
    modes = tuple(modes)
    if config.k_max > prep.n_distinct:
        raise DataError(f"k_max={config.k_max} exceeds the {prep.n_distinct} distinct rows")
    runs: dict[str, dict[int, PairRun]] = {m: {} for m in modes}
    for k in config.k_range:
        res = _run_k(prep, k, config, modes, config.bootstraps, keep_sizes=False)
        for m in modes:
            runs[m][k] = res[m]
    return {m: InstabilityPath(m, runs[m]) for m in modes}


def instability_path(data, config: InstabilityConfig) -> InstabilityPath:
    return instability_paths(data, config, (config.mode,))[config.mode]


@dataclass
class ConvergenceTrace:
    k: int
    running: dict[str, np.ndarray]

    @property
    def difference(self) -> np.ndarray:
        return self.running[MODEL_BASED] - self.running[MODEL_FREE]


def convergence_trace(data, k: int, b_max: int, config: InstabilityConfig) -> ConvergenceTrace:
    """Running mean of raw instability after b = 1..b_max pairs, for both modes on one seed."""
    if b_max < 1:
        raise ValueError("b_max must be >= 1")
    prep = _Prepared(DataMatrix.coerce(data))
    cfg = InstabilityConfig(k, k, b_max, config.mode, False, config.kmeans, config.seed)
    res = _run_k(prep, k, cfg, MODES, b_max, keep_sizes=False)
    running = {}
    for mode, run in res.items():
        vals = np.where(np.isnan(run.raw), 0.0, run.raw)
        counts = np.cumsum(~np.isnan(run.raw))
        with np.errstate(invalid="ignore", divide="ignore"):
            running[mode] = np.cumsum(vals) / counts
    return ConvergenceTrace(k, running)


def path_correlation(a: InstabilityPath, b: InstabilityPath, normalized: bool = False) -> float:
    ks = [k for k in a.ks if k in b.runs]
    x = np.array([a.scores(normalized)[k] for k in ks])
    y = np.array([b.scores(normalized)[k] for k in ks])
    return float(np.corrcoef(x, y)[0, 1])
