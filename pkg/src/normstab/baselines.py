"""Distance-based selectors for the number of clusters: Gap, Jump, Slope, GMM-BIC."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np
from scipy.spatial.distance import cdist

from .core import ClusterAssignment, DataError, DataMatrix, NumericalError
from .instability import SelectionResult
from .kmeans import KMeansConfig, KMeansModel, assign, fit, within_dispersion

MAX_GAP = "max-gap"
FIRST_SE = "first-se-rule"


def _argbest(scores: dict[int, float], maximize: bool) -> int:
    """Best k over finite-or-inf scores; NaN entries are ignored; ties -> smallest k."""
    best_k, best_v = None, None
    for k in sorted(scores):
        v = scores[k]
        if math.isnan(v):
            continue
        if best_v is None or (v > best_v if maximize else v < best_v):
            best_k, best_v = k, v
    if best_k is None:
        raise NumericalError("no k produced a usable score")
    return best_k


def _fit_path(X: np.ndarray, ks: Iterable[int], config: KMeansConfig, rng: np.random.Generator
              ) -> dict[int, tuple[KMeansModel, ClusterAssignment]]:
    out = {}
    for k in ks:
        model = fit(X, k, config, rng)
        out[k] = (model, assign(model, X))
    return out


# --------------------------------------------------------------------- Gap

@dataclass(frozen=True)
class GapConfig:
    num_reference_sets: int = 10
    selection_rule: str = FIRST_SE

    def __post_init__(self):
        if self.num_reference_sets < 1:
            raise ValueError("need at least one reference set")
        if self.selection_rule not in (MAX_GAP, FIRST_SE):
            raise ValueError(f"unknown gap rule {self.selection_rule!r}")


def gap_statistic(data, k_range: Iterable[int], config: GapConfig | None = None,
                  rng: np.random.Generator | None = None,
                  kmeans_config: KMeansConfig | None = None) -> SelectionResult:
    """Gap(k) = mean_b log W_ref,b(k) - log W(k), references uniform on the bounding box.

    ``extras`` carries both rules' choices, the gap values and their standard errors.
    """
    config = config or GapConfig()
    kmeans_config = kmeans_config or KMeansConfig()
    rng = rng if rng is not None else np.random.default_rng()
    data = DataMatrix.coerce(data)
    X = data.values
    ks = sorted(set(k_range))
    distinct = data.distinct_rows()
    diagnostics = []
    usable = [k for k in ks if k <= distinct]
    if len(usable) < len(ks):
        diagnostics.append(f"k > {distinct} distinct rows skipped")

    log_w = {}
    for k, (_, lab) in _fit_path(X, usable, kmeans_config, rng).items():
        w = within_dispersion(X, lab)
        if w > 0:
            log_w[k] = math.log(w)
        else:
            diagnostics.append(f"W({k}) = 0 excluded")

    lo, hi = X.min(axis=0), X.max(axis=0)
    ref_logs = {k: [] for k in log_w}
    for _ in range(config.num_reference_sets):
        ref = rng.uniform(lo, hi, size=X.shape)
        for k, (_, lab) in _fit_path(ref, list(log_w), kmeans_config, rng).items():
            ref_logs[k].append(math.log(max(within_dispersion(ref, lab), np.finfo(float).tiny)))

    B = config.num_reference_sets
    gap, se = {}, {}
    for k in log_w:
        vals = np.array(ref_logs[k])
        gap[k] = float(vals.mean() - log_w[k])
        se[k] = float(vals.std() * math.sqrt(1.0 + 1.0 / B))
    if not gap:
        raise NumericalError("gap statistic undefined for every k")

    k_max_gap = _argbest(gap, maximize=True)
    gks = sorted(gap)
    k_se = gks[-1]
    for a, b in zip(gks, gks[1:]):
        if gap[a] >= gap[b] - se[b]:
            k_se = a
            break
    k_hat = k_max_gap if config.selection_rule == MAX_GAP else k_se
    return SelectionResult(
        k_hat, f"gap ({config.selection_rule})", gap, tuple(diagnostics),
        extras={"se": se, "log_w": log_w, MAX_GAP: k_max_gap, FIRST_SE: k_se},
    )


# -------------------------------------------------------------------- Jump

def distortions(data, k_max: int, kmeans_config: KMeansConfig | None = None,
                rng: np.random.Generator | None = None) -> dict[int, float]:
    """Per-dimension mean squared distance to the nearest centroid, k = 1..k_max."""
    kmeans_config = kmeans_config or KMeansConfig()
    rng = rng if rng is not None else np.random.default_rng()
    data = DataMatrix.coerce(data)
    X = data.values
    n, p = X.shape
    out = {1: float(np.sum((X - X.mean(axis=0)) ** 2)) / (n * p)}
    top = min(k_max, data.distinct_rows())
    for k in range(2, top + 1):
        out[k] = fit(X, k, kmeans_config, rng).inertia / (n * p)
    return out


def jump_path(dist: dict[int, float], power: float) -> tuple[dict[int, float], list[int]]:
    """J(k) = d_k^-Y - d_{k-1}^-Y with d_0^-Y = 0. Returns (path, k flagged for zero distortion)."""
    def tr(d):
        return math.inf if d <= 0.0 else d ** (-power)

    path, flagged = {}, []
    prev = 0.0
    for k in sorted(dist):
        cur = tr(dist[k])
        if math.isinf(cur):
            flagged.append(k)
            path[k] = 0.0 if math.isinf(prev) else math.inf
        else:
            path[k] = cur - prev
        prev = cur
    return path, flagged


def jump_statistic(data, k_range: Iterable[int], power: float | None = None,
                   kmeans_config: KMeansConfig | None = None,
                   rng: np.random.Generator | None = None) -> SelectionResult:
    data = DataMatrix.coerce(data)
    ks = sorted(set(k_range))
    Y = data.p / 2.0 if power is None else power
    if not Y > 0:
        raise ValueError("transform power must be positive")
    dist = distortions(data, ks[-1], kmeans_config, rng)
    path, flagged = jump_path(dist, Y)
    scores = {k: path[k] for k in ks if k in path}
    diagnostics = tuple(f"zero distortion at k={k}" for k in flagged if k in scores)
    k_hat = _argbest(scores, maximize=True)
    return SelectionResult(k_hat, "jump", scores, diagnostics, extras={"distortion": dist, "power": Y})


# -------------------------------------------------------------- Silhouette

def silhouette_width(data, assignment: ClusterAssignment, distances: np.ndarray | None = None) -> float:
    """Mean silhouette over objects; objects in singleton clusters count as 0."""
    X = DataMatrix.coerce(data).values
    labels = np.asarray(assignment.labels) - 1
    present = np.unique(labels)
    if present.size < 2:
        raise DataError("silhouette needs at least two non-empty clusters")
    if len(assignment) != X.shape[0]:
        raise DataError("assignment must cover every row")
    D = cdist(X, X) if distances is None else distances
    onehot = np.zeros((labels.size, assignment.k))
    onehot[np.arange(labels.size), labels] = 1.0
    counts = onehot.sum(axis=0)
    sums = D @ onehot
    own_n = counts[labels]
    with np.errstate(invalid="ignore", divide="ignore"):
        a = sums[np.arange(labels.size), labels] / (own_n - 1)
        mean_other = sums / counts
    mean_other[:, counts == 0] = np.inf
    mean_other[np.arange(labels.size), labels] = np.inf
    b = mean_other.min(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        s = (b - a) / np.maximum(a, b)
    s[own_n == 1] = 0.0
    s[np.isnan(s)] = 0.0
    return float(s.mean())


BACKWARD = "backward"
FORWARD = "forward"


def slope_statistic(data, k_range: Iterable[int], v: float = 1.0, form: str = BACKWARD,
                    kmeans_config: KMeansConfig | None = None,
                    rng: np.random.Generator | None = None) -> SelectionResult:
    """Maximize [Si(k) - Si(k-1)] * Si(k)^v (``form="forward"``: -[Si(k+1) - Si(k)] * Si(k)^v).

    Si(1) is undefined, so with the backward form the smallest k of a range
    starting at 2 cannot be scored.
    """
    if not v > 0:
        raise ValueError("v must be positive")
    if form not in (BACKWARD, FORWARD):
        raise ValueError(f"unknown slope form {form!r}")
    data = DataMatrix.coerce(data)
    X = data.values
    ks = sorted(set(k_range))
    lo = max(2, ks[0] - 1) if form == BACKWARD else ks[0]
    hi = ks[-1] if form == BACKWARD else ks[-1] + 1
    hi = min(hi, data.distinct_rows())
    D = cdist(X, X)
    si = {}
    for k, (_, lab) in _fit_path(X, range(lo, hi + 1), kmeans_config or KMeansConfig(), rng or np.random.default_rng()).items():
        si[k] = silhouette_width(X, lab, D)

    def powered(s):
        with np.errstate(invalid="ignore"):
            return float(np.power(s, v))

    scores = {}
    for k in ks:
        if form == BACKWARD:
            if k in si and k - 1 in si:
                scores[k] = (si[k] - si[k - 1]) * powered(si[k])
        elif k in si and k + 1 in si:
            scores[k] = -(si[k + 1] - si[k]) * powered(si[k])
    if not scores:
        raise NumericalError("slope statistic undefined for every k")
    return SelectionResult(_argbest(scores, maximize=True), "slope", scores, extras={"silhouette": si})


# ----------------------------------------------------------------- GMM BIC

SPHERICAL, DIAGONAL, FULL = "spherical", "diagonal", "full"


class EMFailure(NumericalError):
    """EM could not produce a non-degenerate mixture."""


@dataclass(frozen=True)
class GmmConfig:
    covariance: str = FULL
    max_em_iterations: int = 200
    em_tolerance: float = 1e-6
    restarts: int = 5
    regularization: float = 1e-6

    def __post_init__(self):
        if self.covariance not in (SPHERICAL, DIAGONAL, FULL):
            raise ValueError(f"unknown covariance model {self.covariance!r}")
        if min(self.max_em_iterations, self.restarts) < 1 or not (self.em_tolerance > 0 and self.regularization > 0):
            raise ValueError("GMM settings must be positive")


def gmm_parameter_count(k: int, p: int, covariance: str) -> int:
    cov = {SPHERICAL: k, DIAGONAL: k * p, FULL: k * p * (p + 1) // 2}[covariance]
    return (k - 1) + k * p + cov


@dataclass
class GaussianMixture:
    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray  # always stored as (k, p, p)
    log_likelihood: float
    iterations: int
    converged: bool


def _component_logpdf(X, means, covs):
    n, p = X.shape
    L = np.linalg.cholesky(covs)
    Linv = np.linalg.inv(L)
    diff = X[None, :, :] - means[:, None, :]
    z = diff @ Linv.transpose(0, 2, 1)
    logdet = 2.0 * np.log(np.diagonal(L, axis1=1, axis2=2)).sum(axis=1)
    return -0.5 * (np.sum(z * z, axis=2) + logdet[:, None] + p * math.log(2.0 * math.pi))


def _estep(X, weights, means, covs):
    with np.errstate(divide="ignore"):
        logp = _component_logpdf(X, means, covs) + np.log(weights)[:, None]
    mx = logp.max(axis=0)
    lse = mx + np.log(np.exp(logp - mx).sum(axis=0))
    return np.exp(logp - lse), float(lse.sum())


def _mstep(X, resp, covariance, ridge):
    """Maximizes the expected complete log-likelihood minus (ridge/2) sum_k tr(inv(S_k))."""
    n, p = X.shape
    nk = resp.sum(axis=1)
    if np.any(nk < 1e-10):
        raise EMFailure("mixture component collapsed")
    weights = nk / n
    means = (resp @ X) / nk[:, None]
    diff = X[None, :, :] - means[:, None, :]
    k = resp.shape[0]
    if covariance == FULL:
        scatter = (resp[:, :, None] * diff).transpose(0, 2, 1) @ diff
        covs = (scatter + ridge * np.eye(p)[None]) / nk[:, None, None]
    elif covariance == DIAGONAL:
        sq = (resp[:, None, :] @ (diff * diff))[:, 0, :]
        covs = np.zeros((k, p, p))
        idx = np.arange(p)
        covs[:, idx, idx] = (sq + ridge) / nk[:, None]
    else:
        tot = np.sum(resp * np.sum(diff * diff, axis=2), axis=1)
        var = (tot + ridge * p) / (p * nk)
        covs = var[:, None, None] * np.eye(p)[None]
    return weights, means, covs


def _penalty(covs, ridge):
    return -0.5 * ridge * float(np.trace(np.linalg.inv(covs), axis1=1, axis2=2).sum())


def fit_gmm(data, k: int, config: GmmConfig | None = None, rng: np.random.Generator | None = None) -> GaussianMixture:
    """Best-of-restarts EM, each restart initialized from a single-start k-means labeling.

    The covariance ridge enters as a penalty, so the penalized log-likelihood
    is non-decreasing at every EM step; that is checked, not assumed.
    """
    config = config or GmmConfig()
    rng = rng if rng is not None else np.random.default_rng()
    X = DataMatrix.coerce(data).values
    n, p = X.shape
    # ridge scaled so that a cluster of average size n/k gets covariance + regularization * I
    ridge = config.regularization * n / k
    best = None
    for _ in range(config.restarts):
        model = fit(X, k, KMeansConfig(restarts=1), rng)
        labels = assign(model, X).labels - 1
        resp = np.zeros((k, n))
        resp[labels, np.arange(n)] = 1.0
        try:
            weights, means, covs = _mstep(X, resp, config.covariance, ridge)
            prev = -math.inf
            converged = False
            it = 0
            for it in range(1, config.max_em_iterations + 1):
                resp, ll = _estep(X, weights, means, covs)
                obj = ll + _penalty(covs, ridge)
                if obj < prev - 1e-9:
                    raise NumericalError(f"EM objective decreased by {prev - obj:.3g}")
                if not math.isfinite(obj):
                    raise EMFailure("non-finite log-likelihood")
                if it > 1 and obj - prev <= config.em_tolerance * abs(prev):
                    converged = True
                    break
                prev = obj
                weights, means, covs = _mstep(X, resp, config.covariance, ridge)
        except (EMFailure, np.linalg.LinAlgError):
            continue
        if best is None or ll > best.log_likelihood:
            best = GaussianMixture(weights, means, covs, ll, it, converged)
    if best is None:
        raise EMFailure(f"EM failed in all {config.restarts} restarts at k={k}")
    return best


def gmm_bic(data, k_range: Iterable[int], config: GmmConfig | None = None,
            rng: np.random.Generator | None = None) -> SelectionResult:
    """argmin over k of BIC = -2 log L + (free parameters) log n."""
    config = config or GmmConfig()
    rng = rng if rng is not None else np.random.default_rng()
    data = DataMatrix.coerce(data)
    n, p = data.n, data.p
    distinct = data.distinct_rows()
    bic, diagnostics = {}, []
    for k in sorted(set(k_range)):
        params = gmm_parameter_count(k, p, config.covariance)
        if params >= n or k > distinct:
            diagnostics.append(f"k={k} skipped: {params} parameters for n={n}")
            continue
        try:
            g = fit_gmm(data, k, config, rng)
        except EMFailure as exc:
            diagnostics.append(f"k={k} skipped: {exc}")
            continue
        bic[k] = -2.0 * g.log_likelihood + params * math.log(n)
    if not bic:
        raise NumericalError("no k could be fitted by EM")
    return SelectionResult(_argbest(bic, maximize=False), "gmm-bic", bic, tuple(diagnostics))
