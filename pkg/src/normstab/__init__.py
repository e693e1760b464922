"""Chance-normalized clustering instability for choosing the number of clusters."""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    ClusterAssignment,
    ClusterSizes,
    DataError,
    DataMatrix,
    NumericalError,
    SeedSpec,
    load_csv,
    pair_distance,
    save_csv,
)
from .kmeans import KMeansConfig, KMeansModel, assign, fit, within_dispersion  # noqa: E402
from .normalize import chance_distance, chance_same_cluster, normalize_distance  # noqa: E402
from .instability import (  # noqa: E402
    MODEL_BASED,
    MODEL_FREE,
    InstabilityConfig,
    InstabilityPath,
    SelectionResult,
    convergence_trace,
    instability_path,
    instability_paths,
    model_based_instability,
    model_free_instability,
    select_k,
)
from .baselines import GapConfig, GmmConfig, fit_gmm, gap_statistic, gmm_bic, jump_statistic, silhouette_width, slope_statistic  # noqa: E402
from .scenarios import Scenario, ScenarioSpec, generate, preset  # noqa: E402

__all__ = [name for name in dir() if not name.startswith("_")]
