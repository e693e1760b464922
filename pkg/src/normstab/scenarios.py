"""Synthetic benchmark data: Gaussians on a circle and elongated diagonal clusters."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .core import STREAM_SCENARIO, DataMatrix, SeedSpec, save_csv

CIRCULAR = "circular"
ELONGATED = "elongated"


@dataclass(frozen=True)
class ScenarioSpec:
    kind: str = CIRCULAR
    k_star: int = 3
    per_cluster_n: int = 50
    sigma: float = 0.15
    noise_dims: int = 0
    noise_sigma: float | None = None  # defaults to sigma
    radius: float = 1.0  # circular only
    # elongated only: shift added to every coordinate between consecutive copies
    copy_shift: float = 15.0
    seed: SeedSpec = field(default_factory=SeedSpec)

    def __post_init__(self):
        if self.kind not in (CIRCULAR, ELONGATED):
            raise ValueError(f"unknown scenario kind {self.kind!r}")
        if self.k_star < 1 or not self.sigma > 0 or self.noise_dims < 0 or self.per_cluster_n < 1:
            raise ValueError("invalid scenario parameters")

    def with_seed(self, seed: SeedSpec) -> "ScenarioSpec":
        return replace(self, seed=seed)


@dataclass(frozen=True)
class Scenario:
    data: DataMatrix
    labels: np.ndarray  # true cluster (1..k_star); diagnostics only
    spec: ScenarioSpec


def circle_means(k: int, radius: float = 1.0) -> np.ndarray:
    angles = 2.0 * np.pi * np.arange(k) / k
    return radius * np.column_stack([np.cos(angles), np.sin(angles)])


def _noise_columns(spec: ScenarioSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    sd = spec.sigma if spec.noise_sigma is None else spec.noise_sigma
    return rng.normal(0.0, sd, size=(n, spec.noise_dims))


def generate_circular(spec: ScenarioSpec) -> Scenario:
    if spec.kind != CIRCULAR:
        raise ValueError("spec is not circular")
    rng = spec.seed.rng(STREAM_SCENARIO)
    means = circle_means(spec.k_star, spec.radius)
    labels = np.repeat(np.arange(1, spec.k_star + 1), spec.per_cluster_n)
    X = means[labels - 1] + rng.normal(0.0, spec.sigma, size=(labels.size, 2))
    if spec.noise_dims:
        X = np.hstack([X, _noise_columns(spec, labels.size, rng)])
    return Scenario(DataMatrix(X), labels, spec)


def elongated_segment(points: int = 50, half_side: float = 5.0) -> np.ndarray:
    t = np.linspace(-half_side, half_side, points)
    return np.column_stack([t, t, t])


def generate_elongated(spec: ScenarioSpec, points: int = 50) -> Scenario:
    """k_star noisy copies of a segment on the main diagonal of [-5, 5]^3.

    Copy c is the base segment shifted by c * copy_shift in every coordinate.
    Always ``points`` objects per copy; ``per_cluster_n`` is ignored.
    """
    if spec.kind != ELONGATED:
        raise ValueError("spec is not elongated")
    rng = spec.seed.rng(STREAM_SCENARIO)
    base = elongated_segment(points)
    labels = np.repeat(np.arange(1, spec.k_star + 1), points)
    offsets = (labels - 1)[:, None] * spec.copy_shift
    X = np.tile(base, (spec.k_star, 1)) + offsets + rng.normal(0.0, spec.sigma, size=(labels.size, 3))
    if spec.noise_dims:
        X = np.hstack([X, _noise_columns(spec, labels.size, rng)])
    return Scenario(DataMatrix(X), labels, spec)


def generate(spec: ScenarioSpec) -> Scenario:
    return generate_circular(spec) if spec.kind == CIRCULAR else generate_elongated(spec)


# Named benchmark scenarios.
PRESETS: dict[str, ScenarioSpec] = {
    "circular3": ScenarioSpec(CIRCULAR, 3, sigma=0.15),
    "circular7": ScenarioSpec(CIRCULAR, 7, sigma=0.04),
    "elongated3": ScenarioSpec(ELONGATED, 3, sigma=0.1),
    "elongated7": ScenarioSpec(ELONGATED, 7, sigma=0.1),
    "circular3-noise": ScenarioSpec(CIRCULAR, 3, sigma=0.15, noise_dims=8),
    "circular7-noise": ScenarioSpec(CIRCULAR, 7, sigma=0.04, noise_dims=8),
    "circular3-wide": ScenarioSpec(CIRCULAR, 3, sigma=1.0, radius=2.0),
}


def preset(name: str, seed: SeedSpec | None = None) -> ScenarioSpec:
    try:
        spec = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown scenario {name!r}; choose from {sorted(PRESETS)}") from None
    return spec if seed is None else spec.with_seed(seed)


def save_scenario(path, scenario: Scenario, labels_path=None) -> None:
    save_csv(path, scenario.data)
    if labels_path is not None:
        np.savetxt(labels_path, scenario.labels, fmt="%d")
