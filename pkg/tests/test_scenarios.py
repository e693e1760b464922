import numpy as np
import pytest

from normstab.core import SeedSpec, load_csv
from normstab.scenarios import (
    PRESETS,
    ScenarioSpec,
    circle_means,
    generate,
    preset,
    save_scenario,
)


def test_circle_means_lie_on_the_circle():
    m = circle_means(7, 2.0)
    assert np.allclose(np.hypot(m[:, 0], m[:, 1]), 2.0)
    assert np.allclose(m[0], [2.0, 0.0])


@pytest.mark.parametrize("name, n, p", [
    ("circular3", 150, 2), ("circular7", 350, 2), ("elongated3", 150, 3), ("elongated7", 350, 3),
    ("circular3-noise", 150, 10), ("circular7-noise", 350, 10), ("circular3-wide", 150, 2),
])
def test_preset_shapes(name, n, p):
    sc = generate(preset(name, SeedSpec(1)))
    assert (sc.data.n, sc.data.p) == (n, p)
    assert sc.labels.min() == 1 and sc.labels.max() == PRESETS[name].k_star


def test_circular_cluster_means_and_spread():
    sc = generate(ScenarioSpec("circular", 3, per_cluster_n=4000, sigma=0.15, seed=SeedSpec(2)))
    X = sc.data.values
    for j, mu in enumerate(circle_means(3), start=1):
        pts = X[sc.labels == j]
        assert np.allclose(pts.mean(0), mu, atol=0.01)
        assert pts.std(0) == pytest.approx([0.15, 0.15], abs=0.01)


def test_elongated_copies_are_shifted_diagonal_segments():
    sc = generate(ScenarioSpec("elongated", 3, sigma=1e-9, seed=SeedSpec(0)))
    X = sc.data.values
    for j in range(3):
        seg = X[sc.labels == j + 1]
        assert np.allclose(seg[:, 0], seg[:, 1]) and np.allclose(seg[:, 1], seg[:, 2])
        assert seg[:, 0].min() == pytest.approx(-5 + 15 * j)
        assert seg[:, 0].max() == pytest.approx(5 + 15 * j)


def test_noise_dimensions_are_centered():
    X = generate(preset("circular3-noise", SeedSpec(3))).data.values
    assert np.abs(X[:, 2:].mean(0)).max() < 0.05


def test_same_seed_same_data():
    a = generate(preset("circular7", SeedSpec(9))).data.values
    b = generate(preset("circular7", SeedSpec(9))).data.values
    c = generate(preset("circular7", SeedSpec(10))).data.values
    assert np.array_equal(a, b) and not np.array_equal(a, c)


def test_unknown_and_invalid():
    with pytest.raises(ValueError):
        preset("nope")
    with pytest.raises(ValueError):
        ScenarioSpec("circular", 3, sigma=0.0)


def test_save_scenario_round_trip(tmp_path):
    sc = generate(preset("circular3", SeedSpec(1)))
    save_scenario(tmp_path / "x.csv", sc, tmp_path / "y.txt")
    assert np.array_equal(load_csv(tmp_path / "x.csv").values, sc.data.values)
    assert np.loadtxt(tmp_path / "y.txt", dtype=int).tolist() == sc.labels.tolist()


def test_point_mass_limit_is_recovered():
    from normstab.baselines import MAX_GAP, GapConfig, gap_statistic
    from normstab.instability import InstabilityConfig, instability_paths

    sc = generate(ScenarioSpec("circular", 3, per_cluster_n=20, sigma=1e-9, seed=SeedSpec(4)))
    X = sc.data.values
    for j in range(1, 4):
        assert np.ptp(X[sc.labels == j], axis=0).max() < 1e-6
    paths = instability_paths(sc.data, InstabilityConfig(2, 6, bootstraps=10, seed=SeedSpec(4)))
    assert all(p.select(True).k_hat == 3 for p in paths.values())
    assert gap_statistic(sc.data, range(1, 7), GapConfig(10, MAX_GAP), np.random.default_rng(0)).k_hat == 3
