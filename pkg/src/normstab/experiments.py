"""Experiment runner: selection tables, instability paths, chance curves, jump paths, convergence."""

from __future__ import annotations

import csv
import json
import math
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np
import yaml

from . import __version__
from .baselines import GapConfig, GmmConfig, gap_statistic, gmm_bic, jump_path, distortions, jump_statistic, slope_statistic
from .core import (
    STREAM_CHANCE,
    STREAM_GAP,
    STREAM_GMM,
    STREAM_JUMP,
    STREAM_SLOPE,
    DataError,
    DataMatrix,
    SeedSpec,
    load_csv,
)
from .instability import (
    MODEL_BASED,
    MODEL_FREE,
    InstabilityConfig,
    convergence_trace,
    instability_paths,
    path_correlation,
)
from .kmeans import KMeansConfig
from .normalize import chance_distance, chance_same_cluster
from .scenarios import generate, preset

INSTABILITY_METHODS = ("model-based", "model-based-normalized", "model-free", "model-free-normalized")
DISTANCE_METHODS = ("gap", "jump", "slope", "gmm-bic")
ALL_METHODS = INSTABILITY_METHODS + DISTANCE_METHODS
OVERFLOW = 20  # estimates >= this land in the "20+" bucket


class ConfigError(ValueError):
    pass


def fmt(x) -> str:
    """12 significant digits; integers and text pass through."""
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return format(x, ".12g")
    return str(x)


def _num(x):
    """JSON value carrying exactly what fmt() prints."""
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if not math.isfinite(x):
            return fmt(x)
        return float(fmt(x))
    if isinstance(x, np.integer):
        return int(x)
    return x


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def write_json(path: Path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")


# ------------------------------------------------------------------ config

@dataclass(frozen=True)
class ExperimentConfig:
    scenarios: tuple[str, ...] = ("circular3",)
    data: str | None = None
    iterations: int = 100
    k_min: int = 2
    k_max: int = 50
    bootstraps: int = 100
    methods: tuple[str, ...] = ALL_METHODS
    seed: int = 0
    workers: int = 1
    out: str = "results"
    format: str = "both"
    kmeans: KMeansConfig = field(default_factory=KMeansConfig)
    gap: GapConfig = field(default_factory=lambda: GapConfig(selection_rule="max-gap"))
    gmm: GmmConfig = field(default_factory=GmmConfig)
    jump_power: float | None = None
    slope_v: float = 1.0
    slope_form: str = "backward"

    def __post_init__(self):
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")
        if not self.methods:
            raise ConfigError("methods must be non-empty")
        bad = [m for m in self.methods if m not in ALL_METHODS]
        if bad:
            raise ConfigError(f"unknown methods {bad}; choose from {list(ALL_METHODS)}")
        if self.k_min < 2 or self.k_max < self.k_min:
            raise ConfigError(f"invalid k range {self.k_min}..{self.k_max}")
        if self.bootstraps < 1 or self.workers < 1:
            raise ConfigError("bootstraps and workers must be >= 1")
        if self.format not in ("csv", "json", "both"):
            raise ConfigError("format must be csv, json or both")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.slope_form not in ("backward", "forward") or not self.slope_v > 0:
            raise ConfigError("slope_form must be backward or forward and slope_v positive")
        if self.jump_power is not None and not self.jump_power > 0:
            raise ConfigError("jump_power must be positive")
        if not self.scenarios and self.data is None:
            raise ConfigError("need scenarios or a data file")
        for name in self.scenarios:
            try:
                preset(name)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None

    @property
    def k_range(self) -> range:
        return range(self.k_min, self.k_max + 1)

    def instability(self, seed: SeedSpec, normalize: bool = True) -> InstabilityConfig:
        return InstabilityConfig(self.k_min, self.k_max, self.bootstraps, MODEL_BASED, normalize, self.kmeans, seed)

    def as_dict(self) -> dict:
        """Result-relevant settings; ``workers`` and ``out`` are left out so they never change output bytes."""
        d = asdict(self)
        del d["workers"], d["out"]
        d["scenarios"] = list(self.scenarios)
        d["methods"] = list(self.methods)
        return d


_SUBCONFIGS = {"kmeans": KMeansConfig, "gap": GapConfig, "gmm": GmmConfig}


def config_from_dict(raw: dict) -> ExperimentConfig:
    raw = dict(raw or {})
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    kwargs = {}
    for key, value in raw.items():
        if key in _SUBCONFIGS:
            if isinstance(value, _SUBCONFIGS[key]):
                kwargs[key] = value
                continue
            base = ExperimentConfig.__dataclass_fields__[key].default_factory()
            try:
                kwargs[key] = replace(base, **(value or {}))
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad {key} section: {exc}") from None
        elif key in ("scenarios", "methods"):
            if isinstance(value, str):
                value = [v.strip() for v in value.split(",") if v.strip()]
            kwargs[key] = tuple(value)
        else:
            kwargs[key] = value
    try:
        return ExperimentConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from None
    if raw is not None and not isinstance(raw, dict):
        raise ConfigError("config file must hold a mapping")
    return raw or {}


# ------------------------------------------------------------ single iteration

def iteration_seed(run_seed: int, label: str, iteration: int) -> SeedSpec:
    return SeedSpec(run_seed).child(zlib.crc32(label.encode()), iteration)


def run_methods(data: DataMatrix, config: ExperimentConfig, seed: SeedSpec) -> list[dict]:
    """Every configured method on one dataset. Errors are recorded, never raised."""
    out = []
    wanted = set(config.methods)
    if wanted & set(INSTABILITY_METHODS):
        normalize = bool(wanted & {"model-based-normalized", "model-free-normalized"})
        modes = [m for m in (MODEL_BASED, MODEL_FREE) if m in wanted or f"{m}-normalized" in wanted]
        try:
            paths = instability_paths(data, config.instability(seed, normalize), modes)
            err = None
        except (DataError, ArithmeticError, ValueError, RuntimeError) as exc:
            paths, err = None, f"{type(exc).__name__}: {exc}"
        corr = None
        if paths is not None and len(paths) == 2:
            corr = path_correlation(paths[MODEL_BASED], paths[MODEL_FREE])
        for method in INSTABILITY_METHODS:
            if method not in wanted:
                continue
            mode = MODEL_BASED if method.startswith(MODEL_BASED) else MODEL_FREE
            rec = {"method": method, "k_hat": None, "error": err, "path_correlation": corr}
            if paths is not None:
                try:
                    rec["k_hat"] = paths[mode].select(method.endswith("normalized")).k_hat
                except ValueError as exc:
                    rec["error"] = f"{type(exc).__name__}: {exc}"
            out.append(rec)

    runners = {
        "gap": lambda: gap_statistic(data, config.k_range, config.gap, seed.rng(STREAM_GAP), config.kmeans),
        "jump": lambda: jump_statistic(data, config.k_range, config.jump_power, config.kmeans, seed.rng(STREAM_JUMP)),
        "slope": lambda: slope_statistic(data, config.k_range, config.slope_v, config.slope_form, config.kmeans,
                                         seed.rng(STREAM_SLOPE)),
        "gmm-bic": lambda: gmm_bic(data, config.k_range, config.gmm, seed.rng(STREAM_GMM)),
    }
    for method in DISTANCE_METHODS:
        if method not in wanted:
            continue
        try:
            out.append({"method": method, "k_hat": runners[method]().k_hat, "error": None})
        except (DataError, ArithmeticError, ValueError, RuntimeError) as exc:
            out.append({"method": method, "k_hat": None, "error": f"{type(exc).__name__}: {exc}"})
    return out


def _run_task(args) -> list[dict]:
    config, scenario, iteration = args
    seed = iteration_seed(config.seed, scenario, iteration)
    if scenario.startswith("data:"):
        data = load_csv(config.data)
    else:
        data = generate(preset(scenario, seed)).data
    records = run_methods(data, config, seed)
    for rec in records:
        rec.update(scenario=scenario, iteration=iteration, seed=seed.master_seed)
    return records


# ------------------------------------------------------------------ table

@dataclass
class ResultTable:
    config: ExperimentConfig
    records: list[dict]

    def histogram(self, scenario: str, method: str) -> dict[str, int]:
        buckets = {str(k): 0 for k in range(2, OVERFLOW)}
        buckets[f"{OVERFLOW}+"] = 0
        for r in self.records:
            if r["scenario"] == scenario and r["method"] == method and r["k_hat"] is not None:
                k = r["k_hat"]
                buckets[f"{OVERFLOW}+" if k >= OVERFLOW else str(k)] += 1
        return buckets

    def count(self, scenario: str, method: str, k) -> int:
        key = f"{OVERFLOW}+" if k == "20+" or (isinstance(k, int) and k >= OVERFLOW) else str(k)
        return self.histogram(scenario, method)[key]

    def errors(self, scenario: str, method: str) -> int:
        return sum(1 for r in self.records if r["scenario"] == scenario and r["method"] == method and r["error"])

    def rows(self) -> list[list]:
        out = []
        for scenario in _labels(self.config):
            for method in self.config.methods:
                h = self.histogram(scenario, method)
                out.append([scenario, method, self.config.iterations, self.errors(scenario, method), *h.values()])
        return out

    @property
    def header(self) -> list[str]:
        return ["scenario", "method", "iterations", "errors", *[str(k) for k in range(2, OVERFLOW)], f"{OVERFLOW}+"]

    def correlations(self, scenario: str) -> list[float]:
        seen = {}
        for r in self.records:
            if r["scenario"] == scenario and r.get("path_correlation") is not None:
                seen[r["iteration"]] = r["path_correlation"]
        return [seen[i] for i in sorted(seen)]

    def to_json(self) -> dict:
        return {
            "software": {"name": "normstab", "version": __version__},
            "config": self.config.as_dict(),
            "header": self.header,
            "table": [[_num(v) for v in row] for row in self.rows()],
            "records": [
                {k: _num(v) for k, v in r.items()} for r in self.records
            ],
        }

    def write(self, out_dir: Path) -> None:
        out_dir.mkdir(parents=True, exist_ok=True)
        if self.config.format in ("csv", "both"):
            write_csv(out_dir / "table.csv", self.header, self.rows())
            write_csv(
                out_dir / "records.csv",
                ["scenario", "method", "iteration", "seed", "k_hat", "path_correlation", "error"],
                [[r["scenario"], r["method"], r["iteration"], r["seed"], r["k_hat"], r.get("path_correlation"),
                  r["error"] or ""] for r in self.records],
            )
        if self.config.format in ("json", "both"):
            write_json(out_dir / "table.json", self.to_json())


def _labels(config: ExperimentConfig) -> list[str]:
    if config.data is not None:
        return [f"data:{Path(config.data).name}"]
    return list(config.scenarios)


def run_table_experiment(config: ExperimentConfig, write: bool = True) -> ResultTable:
    """Fresh data per (scenario, iteration); all methods on identical data.

    Output order is fixed by (scenario, method, iteration), so the worker count
    never changes what lands on disk.
    """
    if config.data is not None:
        load_csv(config.data)  # fail fast on bad data
    tasks = [(config, s, i) for s in _labels(config) for i in range(config.iterations)]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            chunks = list(pool.map(_run_task, tasks))
    else:
        chunks = [_run_task(t) for t in tasks]
    records = [r for chunk in chunks for r in chunk]
    order = {m: i for i, m in enumerate(config.methods)}
    labels = {s: i for i, s in enumerate(_labels(config))}
    records.sort(key=lambda r: (labels[r["scenario"]], order[r["method"]], r["iteration"]))
    table = ResultTable(config, records)
    if write:
        table.write(Path(config.out))
    return table


# ------------------------------------------------------------------ paths

PATH_HEADER = ["k", "method", "raw_mean", "normalized_mean", "raw_sd", "degenerate_count"]


def emit_instability_path(data, config: ExperimentConfig, path: Path | None = None) -> list[list]:
    """One row per (k, mode): raw and normalized mean instability."""
    data = DataMatrix.coerce(data)
    paths = instability_paths(data, config.instability(SeedSpec(config.seed), True))
    rows = []
    for mode in (MODEL_BASED, MODEL_FREE):
        p = paths[mode]
        for k in p.ks:
            run = p.runs[k]
            rows.append([k, mode, run.raw_mean, run.normalized_mean, run.raw_sd, run.degenerate])
    if path is not None:
        write_csv(path, PATH_HEADER, rows)
    return rows


# ------------------------------------------------------------ chance curve

CHANCE_HEADER = ["k", "kind", "draw", "p_same", "d_r"]
QUANTILES = (0.05, 0.25, 0.5, 0.75, 0.95)


def draw_cluster_sizes(k: int, m: int, rng: np.random.Generator) -> np.ndarray:
    """Random sizes for m objects in k non-empty clusters.

    One object is placed in each cluster and the remaining m - k follow
    Multinomial(theta) with theta ~ Dirichlet(1, ..., 1).
    """
    theta = rng.dirichlet(np.ones(k))
    return 1 + rng.multinomial(m - k, theta)


def chance_curve(k_max: int, objects_m: int, draws: int, seed: SeedSpec, path: Path | None = None) -> list[list]:
    if objects_m < k_max:
        raise ConfigError("objects_m must be >= k_max")
    if k_max < 2 or draws < 1:
        raise ConfigError("need k_max >= 2 and draws >= 1")
    rows = []
    for k in range(2, k_max + 1):
        rng = seed.rng(STREAM_CHANCE, k)
        d_r = np.empty(draws)
        for d in range(draws):
            sizes = draw_cluster_sizes(k, objects_m, rng)
            p = chance_same_cluster(sizes)
            d_r[d] = chance_distance(sizes, sizes)
            rows.append([k, "sample", d, p, d_r[d]])
        for q in QUANTILES:
            rows.append([k, "quantile", q, None, float(np.quantile(d_r, q))])
    if path is not None:
        write_csv(path, CHANCE_HEADER, rows)
    return rows


# -------------------------------------------------------------- jump paths

JUMP_HEADER = ["record", "iteration", "k", "jump", "distortion", "degenerate"]


def jump_path_experiment(scenario: str, iterations: int, k_max: int, config: ExperimentConfig,
                         path: Path | None = None) -> list[list]:
    """Jump-statistic path (k = 2..k_max) for each iteration plus per-k variance rows."""
    if iterations < 1:
        raise ConfigError("iterations must be >= 1")
    rows = []
    jumps: dict[int, list[float]] = {}
    for it in range(iterations):
        seed = iteration_seed(config.seed, scenario, it)
        data = generate(preset(scenario, seed)).data
        dist = distortions(data, k_max, config.kmeans, seed.rng(STREAM_JUMP))
        Y = data.p / 2.0 if config.jump_power is None else config.jump_power
        jp, flagged = jump_path(dist, Y)
        for k in range(2, k_max + 1):
            if k not in jp:
                continue
            rows.append(["path", it, k, jp[k], dist[k], k in flagged])
            jumps.setdefault(k, []).append(jp[k])
    for k in sorted(jumps):
        vals = np.array(jumps[k])
        var = float(vals.var(ddof=1)) if vals.size > 1 and np.all(np.isfinite(vals)) else math.nan
        rows.append(["variance", None, k, var, None, None])
    if path is not None:
        write_csv(path, JUMP_HEADER, rows)
    return rows


# ------------------------------------------------------------- convergence

CONVERGENCE_HEADER = ["b", "mode", "running_mean", "difference"]


def run_convergence(data, k: int, b_max: int, config: ExperimentConfig, path: Path | None = None) -> list[list]:
    trace = convergence_trace(DataMatrix.coerce(data), k, b_max, config.instability(SeedSpec(config.seed), False))
    diff = trace.difference
    rows = []
    for mode in (MODEL_BASED, MODEL_FREE):
        for b, v in enumerate(trace.running[mode], start=1):
            rows.append([b, mode, v, diff[b - 1]])
    if path is not None:
        write_csv(path, CONVERGENCE_HEADER, rows)
    return rows
