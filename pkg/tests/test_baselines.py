import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial.distance import cdist

from normstab.core import ClusterAssignment, DataError, NumericalError
from normstab.baselines import (
    FIRST_SE,
    MAX_GAP,
    GapConfig,
    GmmConfig,
    _estep,
    _mstep,
    _penalty,
    distortions,
    fit_gmm,
    gap_statistic,
    gmm_bic,
    gmm_parameter_count,
    jump_path,
    jump_statistic,
    silhouette_width,
    slope_statistic,
)


def three_blobs(seed=0, per=30):
    rng = np.random.default_rng(seed)
    centers = np.array([[0, 0], [6, 0], [3, 5]], float)
    return np.vstack([c + rng.normal(0, 0.4, (per, 2)) for c in centers])


def silhouette_oracle(X, labels):
    D = cdist(X, X)
    out = []
    for i in range(len(X)):
        own = labels == labels[i]
        if own.sum() == 1:
            out.append(0.0)
            continue
        a = D[i, own].sum() / (own.sum() - 1)
        b = min(D[i, labels == c].mean() for c in set(labels) if c != labels[i])
        out.append((b - a) / max(a, b))
    return float(np.mean(out))


def test_gap_finds_three_blobs_with_both_rules():
    res = gap_statistic(three_blobs(), range(1, 9), GapConfig(10, MAX_GAP), np.random.default_rng(1))
    assert res.k_hat == 3
    assert res.extras[FIRST_SE] == 3
    assert set(res.extras["se"]) == set(res.path)


def test_gap_reference_dispersion_falls_with_k():
    res = gap_statistic(three_blobs(), range(1, 7), GapConfig(5), np.random.default_rng(2))
    log_w = res.extras["log_w"]
    assert all(log_w[k] > log_w[k + 1] for k in range(1, 6))


def test_jump_path_definition_and_edge_cases():
    path, flagged = jump_path({1: 4.0, 2: 1.0, 3: 0.25}, 0.5)
    assert path == {1: 0.5, 2: 0.5, 3: 1.0}
    assert flagged == []
    path, flagged = jump_path({1: 1.0, 2: 0.0, 3: 0.0}, 1.0)
    assert path[2] == math.inf and path[3] == 0.0
    assert flagged == [2, 3]


def test_jump_statistic_on_blobs_and_degenerate_data():
    assert jump_statistic(three_blobs(), range(2, 8), rng=np.random.default_rng(0)).k_hat == 3
    X = np.repeat(np.array([[0.0, 0.0], [1.0, 1.0], [5.0, 0.0]]), 4, axis=0)
    res = jump_statistic(X, range(2, 4), rng=np.random.default_rng(0))
    assert res.k_hat == 3 and res.diagnostics


def test_distortions_at_one_is_total_variance_per_dimension():
    X = three_blobs()
    d = distortions(X, 3, rng=np.random.default_rng(0))
    assert d[1] == pytest.approx(X.var(axis=0).mean())
    assert d[1] > d[2] > d[3]


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 5))
def test_silhouette_matches_oracle_and_range(seed, k):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(15, 2))
    labels = rng.integers(1, k + 1, 15)
    if len(set(labels)) < 2:
        return
    s = silhouette_width(X, ClusterAssignment(labels, k))
    assert s == pytest.approx(silhouette_oracle(X, labels), abs=1e-12)
    assert -1.0 <= s <= 1.0


def test_silhouette_near_one_when_separated_and_needs_two_clusters():
    X = three_blobs()
    labels = np.repeat([1, 2, 3], 30)
    assert silhouette_width(X, ClusterAssignment(labels, 3)) > 0.8
    with pytest.raises(DataError):
        silhouette_width(X, ClusterAssignment(np.ones(90, int), 1))


def test_slope_selects_three_and_cannot_score_k2_in_backward_form():
    res = slope_statistic(three_blobs(), range(2, 9), rng=np.random.default_rng(0))
    assert res.k_hat == 3
    assert 2 not in res.path
    orig = slope_statistic(three_blobs(), range(2, 9), form="forward", rng=np.random.default_rng(0))
    assert 2 in orig.path


def test_parameter_counts():
    assert gmm_parameter_count(1, 2, "full") == 5
    assert gmm_parameter_count(3, 2, "full") == 2 + 6 + 9
    assert gmm_parameter_count(3, 4, "diagonal") == 2 + 12 + 12
    assert gmm_parameter_count(3, 4, "spherical") == 2 + 12 + 3


@pytest.mark.parametrize("covariance", ["full", "diagonal", "spherical"])
def test_em_objective_is_monotone(covariance):
    rng = np.random.default_rng(4)
    X = three_blobs(3)
    k, ridge = 3, 1e-6 * len(X) / 3
    resp = rng.dirichlet(np.ones(k), size=len(X)).T
    weights, means, covs = _mstep(X, resp, covariance, ridge)
    prev = -np.inf
    for _ in range(60):
        resp, ll = _estep(X, weights, means, covs)
        obj = ll + _penalty(covs, ridge)
        assert obj >= prev - 1e-9
        prev = obj
        weights, means, covs = _mstep(X, resp, covariance, ridge)


def test_gmm_bic_on_blobs_and_skips_oversized_k():
    X = three_blobs()
    assert gmm_bic(X, range(1, 7), rng=np.random.default_rng(0)).k_hat == 3
    res = gmm_bic(X[:20], range(2, 6), rng=np.random.default_rng(0))
    assert any("skipped" in d for d in res.diagnostics)
    with pytest.raises(NumericalError):
        gmm_bic(X[:8], range(3, 5), rng=np.random.default_rng(0))


def test_fit_gmm_weights_and_symmetric_covariances():
    g = fit_gmm(three_blobs(), 3, GmmConfig(), np.random.default_rng(0))
    assert g.weights.sum() == pytest.approx(1.0)
    assert np.allclose(g.covariances, g.covariances.transpose(0, 2, 1))
    assert np.all(np.linalg.eigvalsh(g.covariances) > 0)
