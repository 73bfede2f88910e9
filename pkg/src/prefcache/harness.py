"""Experiment orchestration: configuration, the generate/train/forecast/place/
evaluate pipeline, capacity sweeps, the static-vs-dynamic comparison, and CSV
result files.

Configuration lives in a flat dataclass; every field can come from a
`key = value` config file and be overridden by a CLI flag of the same name.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .core import (
    FormatError,
    RequestMatrix,
    SeededRng,
    Topology,
    TopologyConfig,
    build_topology,
)
from .synthgen import (
    CorrelationParams,
    RequestRange,
    SkewnessRange,
    generate_request_history,
)
from .preference import AggregatedPreference, aggregate_preference, profile_from_counts
from .forecaster import ForecastMatrix, LstmModel, TrainConfig, forecast_all, train_user_models
from .cachemodel import CostParams, average_cost_het, average_cost_hom
from .placement import (
    SchemeId,
    build_schedule,
    indicators_to_probabilities,
    schedule_to_hom,
)

__all__ = [
    "ExperimentConfig",
    "ResultRow",
    "RESULT_FIELDS",
    "PipelineBundle",
    "run_pipeline",
    "evaluate_scheme",
    "run_experiment",
    "compare_static_dynamic",
    "parse_config_file",
    "config_from_sources",
    "write_results",
    "load_results",
    "write_summary",
    "write_plot_data",
    "write_comparison",
    "write_rho",
    "load_rho",
]

_SWEEP_AXES = ("none", "cb", "cd")
_RHO_MODES = ("forecast", "oracle")


def _floats(text: str) -> tuple[float, ...]:
    text = text.strip()
    return tuple(float(p) for p in text.split(",") if p.strip()) if text else ()


def _strings(text: str) -> tuple[str, ...]:
    return tuple(p.strip() for p in text.split(",") if p.strip())


@dataclass
class ExperimentConfig:
    """Flat experiment configuration with desk-scale defaults."""

    num_bs: int = 3
    users_per_bs: int = 15
    num_contents: int = 225
    bs_capacity: int = 12
    user_capacity: int = 4
    gamma_min: float = 0.5
    gamma_max: float = 1.5
    n_req_min: int = 50
    n_req_max: int = 200
    amplitudes: tuple[float, ...] = (1.0, 1.0, 1.0)
    noise_mean: float = 0.0
    noise_var: float = 1.0
    history_slots: int = 250
    horizon: int = 50
    hidden_dim: int = 64
    epochs: int = 200
    learning_rate: float = 0.01
    patience: int = 20
    train_frac: float = 0.70
    val_frac: float = 0.15
    test_frac: float = 0.15
    clip_norm: float = 5.0
    storage_cost: float = 2000.0
    comm_d2d: float = 100.0
    comm_serving_bs: float = 500.0
    comm_cluster_bs: float = 1000.0
    comm_cloud: float = 5000.0
    schemes: tuple[str, ...] = ("bs-first", "user-first", "overlapping")
    sweep_axis: str = "none"
    sweep_min: int = 4
    sweep_max: int = 14
    seed: int = 0
    num_seeds: int = 1
    rho_mode: str = "forecast"
    out_dir: str = "results"

    def validate(self) -> None:
        if self.history_slots < 4:
            raise ValueError("history_slots must be >= 4")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.num_seeds < 1:
            raise ValueError("num_seeds must be >= 1")
        if self.sweep_axis not in _SWEEP_AXES:
            raise ValueError(f"sweep_axis must be one of {_SWEEP_AXES}")
        if self.rho_mode not in _RHO_MODES:
            raise ValueError(f"rho_mode must be one of {_RHO_MODES}")
        if self.sweep_axis != "none":
            if not 0 <= self.sweep_min <= self.sweep_max <= self.num_contents:
                raise ValueError("sweep range must satisfy 0 <= min <= max <= num_contents")
        for name in self.schemes:
            SchemeId(name)
        if abs(self.train_frac + self.val_frac + self.test_frac - 1.0) > 1e-9:
            raise ValueError("train/val/test fractions must sum to 1")
        self.topology()  # capacity/count validation
        self.cost_params()  # tier ordering validation

    def topology(self, bs_capacity: int | None = None, user_capacity: int | None = None) -> Topology:
        return build_topology(
            TopologyConfig(
                num_bs=self.num_bs,
                users_per_bs=self.users_per_bs,
                num_contents=self.num_contents,
                bs_capacity=self.bs_capacity if bs_capacity is None else bs_capacity,
                user_capacity=self.user_capacity if user_capacity is None else user_capacity,
            )
        )

    def cost_params(self) -> CostParams:
        return CostParams(
            storage_cost=self.storage_cost,
            comm_costs={
                "d2d": self.comm_d2d,
                "serving_bs": self.comm_serving_bs,
                "cluster_bs": self.comm_cluster_bs,
                "cloud": self.comm_cloud,
            },
        )

    def train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs,
            learning_rate=self.learning_rate,
            split=(self.train_frac, self.val_frac, self.test_frac),
            seed=seed,
            patience=self.patience,
            hidden_dim=self.hidden_dim,
            clip_norm=self.clip_norm,
        )

    def skew_range(self) -> SkewnessRange:
        return SkewnessRange(self.gamma_min, self.gamma_max)

    def request_range(self) -> RequestRange:
        return RequestRange(self.n_req_min, self.n_req_max)

    def correlation(self) -> CorrelationParams:
        return CorrelationParams(self.amplitudes, self.noise_mean, self.noise_var)

    def sweep_points(self) -> list[tuple[int, int]]:
        """(bs_capacity, user_capacity) pairs covered by the sweep."""
        if self.sweep_axis == "cb":
            return [(v, self.user_capacity) for v in range(self.sweep_min, self.sweep_max + 1)]
        if self.sweep_axis == "cd":
            return [(self.bs_capacity, v) for v in range(self.sweep_min, self.sweep_max + 1)]
        return [(self.bs_capacity, self.user_capacity)]


_FIELD_PARSERS: dict[str, Callable[[str], object]] = {}
for f in fields(ExperimentConfig):
    if f.type in ("int",):
        _FIELD_PARSERS[f.name] = int
    elif f.type in ("float",):
        _FIELD_PARSERS[f.name] = float
    elif f.name == "amplitudes":
        _FIELD_PARSERS[f.name] = _floats
    elif f.name == "schemes":
        _FIELD_PARSERS[f.name] = _strings
    else:
        _FIELD_PARSERS[f.name] = str

CONFIG_KEYS = tuple(_FIELD_PARSERS)


def parse_config_file(path) -> dict[str, str]:
    """Read a flat `key = value` file; '#' starts a comment."""
    path = Path(path)
    out: dict[str, str] = {}
    with path.open("r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise FormatError(path, line_no, f"expected 'key = value', got {line!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in _FIELD_PARSERS:
                raise FormatError(path, line_no, f"unknown config key {key!r}")
            out[key] = value
    return out


def config_from_sources(config_file=None, overrides: dict | None = None) -> ExperimentConfig:
    """Defaults, then config file values, then explicit overrides."""
    cfg = ExperimentConfig()
    raw: dict[str, object] = {}
    if config_file is not None:
        raw.update(parse_config_file(config_file))
    if overrides:
        raw.update({k: v for k, v in overrides.items() if v is not None})
    for key, value in raw.items():
        if key not in _FIELD_PARSERS:
            raise ValueError(f"unknown config key {key!r}")
        parsed = _FIELD_PARSERS[key](value) if isinstance(value, str) else value
        setattr(cfg, key, parsed)
    cfg.validate()
    return cfg


def config_comment(cfg: ExperimentConfig) -> str:
    """One-line reproducibility record of every config field."""
    parts = []
    for f in fields(ExperimentConfig):
        value = getattr(cfg, f.name)
        if isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        parts.append(f"{f.name}={value}")
    return "#config " + ";".join(parts)


# --- pipeline -----------------------------------------------------------------


@dataclass
class PipelineBundle:
    """Everything one seed's pipeline produces ahead of placement."""

    seed: int
    dataset: RequestMatrix
    history: RequestMatrix
    models: list[LstmModel]
    forecast: ForecastMatrix
    joints: np.ndarray
    rho: AggregatedPreference


def generate_dataset(cfg: ExperimentConfig, seed: int) -> RequestMatrix:
    """Synthetic request history covering history plus evaluation horizon."""
    return generate_request_history(
        cfg.topology(),
        cfg.history_slots + cfg.horizon,
        SeededRng(seed),
        skew=cfg.skew_range(),
        reqs=cfg.request_range(),
        corr=cfg.correlation(),
    )


def run_pipeline(cfg: ExperimentConfig, seed: int, dataset: RequestMatrix | None = None) -> PipelineBundle:
    """Generate (or accept) data, train per-user models, forecast, build rho.

    Placement only ever sees the forecast joints; in oracle mode the actual
    future slots replace the forecast when building the preference weights,
    quantifying how much forecast error costs.
    """
    if dataset is None:
        dataset = generate_dataset(cfg, seed)
    n_hist = cfg.history_slots
    if dataset.slots < n_hist:
        raise ValueError(f"dataset has {dataset.slots} slots, need >= {n_hist}")
    history = RequestMatrix(dataset.counts[:n_hist], seed=dataset.seed)
    series = history.counts.transpose(1, 0, 2)
    models = train_user_models(series, cfg.train_config(seed))
    forecast = forecast_all(models, history, cfg.horizon)
    profiles = [
        profile_from_counts(forecast.counts[k], slot=forecast.start_slot + k)
        for k in range(forecast.horizon)
    ]
    joints = np.stack([p.joint for p in profiles])
    if cfg.rho_mode == "oracle":
        if dataset.slots < n_hist + cfg.horizon:
            raise ValueError("oracle mode needs the dataset to cover the horizon")
        rho_profiles = [
            profile_from_counts(dataset.counts[n_hist + k], slot=n_hist + k)
            for k in range(cfg.horizon)
        ]
    else:
        rho_profiles = profiles
    rho = aggregate_preference(rho_profiles)
    return PipelineBundle(seed, dataset, history, models, forecast, joints, rho)


def evaluate_scheme(
    scheme: SchemeId | str,
    joints: np.ndarray,
    topo: Topology,
    costs: CostParams,
    rho: AggregatedPreference,
    history: RequestMatrix | None = None,
) -> float:
    """Schedule the scheme and return its cluster-average cost.

    Tier-uniform schedules (always the static baseline, the homogeneous
    scheme when its cells agree) go through the closed homogeneous form;
    everything else through the heterogeneous form.
    """
    scheme = SchemeId(scheme)
    sched = build_schedule(scheme, joints, topo, history=history)
    if scheme in (SchemeId.HOMOGENEOUS, SchemeId.STATIC_ZIPF) and sched.is_tier_uniform():
        cost = average_cost_hom(schedule_to_hom(sched, topo), rho.rho, topo, costs)
    else:
        cost = average_cost_het(indicators_to_probabilities(sched, topo), rho.rho, topo, costs)
    row_mass = rho.rho.sum(axis=1)
    lo = costs.storage_cost * (row_mass.min() if row_mass.size else 0.0)
    hi = costs.phi_cloud
    tol = 1e-9 * max(1.0, hi)
    if not lo - tol <= cost <= hi + tol:
        raise AssertionError(f"cost {cost} escapes [{lo}, {hi}]")
    return cost


@dataclass(frozen=True)
class ResultRow:
    scheme: str
    c_b: int
    c_d: int
    cost: float
    seed: int
    wall_time: float


RESULT_FIELDS = ("scheme", "c_b", "c_d", "cost", "seed", "wall_time")

DatasetProvider = Callable[[int], RequestMatrix]


def run_experiment(cfg: ExperimentConfig, dataset_provider: DatasetProvider | None = None) -> list[ResultRow]:
    """Full experiment: per seed, run the pipeline once, then evaluate every
    (sweep point, scheme) pair on the shared forecasts."""
    cfg.validate()
    rows: list[ResultRow] = []
    for offset in range(cfg.num_seeds):
        seed = cfg.seed + offset
        dataset = dataset_provider(seed) if dataset_provider is not None else None
        bundle = run_pipeline(cfg, seed, dataset=dataset)
        costs = cfg.cost_params()
        for c_b, c_d in cfg.sweep_points():
            topo = cfg.topology(bs_capacity=c_b, user_capacity=c_d)
            for scheme in cfg.schemes:
                t0 = time.perf_counter()
                cost = evaluate_scheme(scheme, bundle.joints, topo, costs, bundle.rho, history=bundle.history)
                wall = time.perf_counter() - t0
                rows.append(ResultRow(str(SchemeId(scheme)), c_b, c_d, cost, seed, wall))
    return rows


def compare_static_dynamic(
    cfg: ExperimentConfig,
    dataset_provider: DatasetProvider | None = None,
) -> tuple[list[ResultRow], list[dict]]:
    """Evaluate the static baseline against dynamic homogeneous caching.

    Both schemes see identical data and forecasts; the comparison table holds
    the per-sweep-point seed-mean costs and their difference (static minus
    dynamic, positive when the dynamic scheme wins).
    """
    cfg = replace(cfg, schemes=(str(SchemeId.STATIC_ZIPF), str(SchemeId.HOMOGENEOUS)))
    rows = run_experiment(cfg, dataset_provider)
    table: list[dict] = []
    for c_b, c_d in cfg.sweep_points():
        static = [r.cost for r in rows if r.scheme == str(SchemeId.STATIC_ZIPF) and (r.c_b, r.c_d) == (c_b, c_d)]
        dynamic = [r.cost for r in rows if r.scheme == str(SchemeId.HOMOGENEOUS) and (r.c_b, r.c_d) == (c_b, c_d)]
        s_mean = float(np.mean(static))
        d_mean = float(np.mean(dynamic))
        table.append(
            {
                "c_b": c_b,
                "c_d": c_d,
                "static_cost": s_mean,
                "dynamic_cost": d_mean,
                "difference": s_mean - d_mean,
            }
        )
    return rows, table


# --- result files ---------------------------------------------------------------


def write_results(rows: Sequence[ResultRow], path, include_timing: bool = False) -> None:
    """Result CSV; timing is optional so that identical runs stay byte-identical."""
    names = RESULT_FIELDS if include_timing else RESULT_FIELDS[:-1]
    lines = [",".join(names)]
    for r in rows:
        vals = [r.scheme, str(r.c_b), str(r.c_d), repr(r.cost), str(r.seed)]
        if include_timing:
            vals.append(repr(r.wall_time))
        lines.append(",".join(vals))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_results(path) -> list[ResultRow]:
    path = Path(path)
    rows: list[ResultRow] = []
    with path.open("r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header not in (",".join(RESULT_FIELDS), ",".join(RESULT_FIELDS[:-1])):
            raise FormatError(path, 1, f"unexpected results header {header!r}")
        has_timing = header == ",".join(RESULT_FIELDS)
        for line_no, raw in enumerate(fh, start=2):
            line = raw.strip()
            if not line:
                continue
            parts = line.split(",")
            expected = 6 if has_timing else 5
            if len(parts) != expected:
                raise FormatError(path, line_no, f"expected {expected} fields, got {len(parts)}")
            try:
                rows.append(
                    ResultRow(
                        scheme=parts[0],
                        c_b=int(parts[1]),
                        c_d=int(parts[2]),
                        cost=float(parts[3]),
                        seed=int(parts[4]),
                        wall_time=float(parts[5]) if has_timing else 0.0,
                    )
                )
            except ValueError:
                raise FormatError(path, line_no, f"malformed result row {line!r}") from None
    return rows


def _grouped(rows: Sequence[ResultRow]) -> dict[tuple[str, int, int], list[float]]:
    groups: dict[tuple[str, int, int], list[float]] = {}
    for r in rows:
        groups.setdefault((r.scheme, r.c_b, r.c_d), []).append(r.cost)
    return groups


def write_summary(rows: Sequence[ResultRow], path) -> None:
    """Seed-aggregated costs: mean and standard error per (scheme, point)."""
    lines = ["scheme,c_b,c_d,mean_cost,stderr,num_seeds"]
    for (scheme, c_b, c_d), costs in sorted(_grouped(rows).items()):
        mean = float(np.mean(costs))
        stderr = float(np.std(costs, ddof=1) / math.sqrt(len(costs))) if len(costs) > 1 else 0.0
        lines.append(f"{scheme},{c_b},{c_d},{mean!r},{stderr!r},{len(costs)}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_plot_data(rows: Sequence[ResultRow], path, axis: str) -> None:
    """Flat `x,scheme,cost` file (seed-mean cost per swept capacity value)."""
    lines = ["x,scheme,cost"]
    for (scheme, c_b, c_d), costs in sorted(_grouped(rows).items(), key=lambda kv: (kv[0][1], kv[0][2], kv[0][0])):
        x = c_d if axis == "cd" else c_b
        lines.append(f"{x},{scheme},{float(np.mean(costs))!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_comparison(table: Sequence[dict], path) -> None:
    lines = ["c_b,c_d,static_cost,dynamic_cost,difference"]
    for row in table:
        lines.append(
            f"{row['c_b']},{row['c_d']},{row['static_cost']!r},{row['dynamic_cost']!r},{row['difference']!r}"
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_rho(agg: AggregatedPreference, path) -> None:
    lines = [f"#U={agg.rho.shape[0]},F={agg.rho.shape[1]},horizon={agg.horizon},start={agg.start_slot}"]
    lines.append("user,content,rho")
    us, ks = np.nonzero(agg.rho)
    for u, k in zip(us.tolist(), ks.tolist()):
        lines.append(f"{u},{k},{float(agg.rho[u, k])!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_rho(path) -> AggregatedPreference:
    path = Path(path)
    meta: dict[str, str] = {}
    rho = None
    seen_header = False
    with path.open("r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                if not meta:
                    for item in line[1:].split(","):
                        k, v = item.split("=", 1)
                        meta[k.strip()] = v.strip()
                continue
            if not seen_header:
                if line != "user,content,rho":
                    raise FormatError(path, line_no, "expected header 'user,content,rho'")
                rho = np.zeros((int(meta["U"]), int(meta["F"])))
                seen_header = True
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise FormatError(path, line_no, f"expected 3 fields, got {len(parts)}")
            rho[int(parts[0]), int(parts[1])] = float(parts[2])
    if rho is None:
        raise FormatError(path, 0, "missing metadata/header lines")
    raw_avg = rho.copy()
    return AggregatedPreference(
        rho=rho,
        rho_raw=raw_avg,
        horizon=int(meta.get("horizon", "1")),
        start_slot=int(meta.get("start", "0")),
    )
