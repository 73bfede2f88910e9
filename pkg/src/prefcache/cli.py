"""Command-line front end.

Subcommands cover each pipeline stage plus the full experiments:

    gen             synthesize a request-history CSV
    train           train per-user models, dump them, forecast the horizon
    forecast        roll out saved models or a trivial baseline
    place           build a placement schedule from a forecast
    evaluate        cost of a stored schedule under stored forecasts
    sweep           full multi-seed capacity sweep -> results/summary/plot CSVs
    compare-static  static baseline vs dynamic homogeneous caching

Every config key (see `prefcache.harness.ExperimentConfig`) can be set in a
`key = value` config file passed with --config and overridden by a flag of
the same name.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import harness
from .core import RequestMatrix, SeededRng, load_request_matrix, save_request_matrix
from .forecaster import (
    baseline_forecast,
    forecast_all,
    load_forecast,
    load_model,
    save_forecast,
    save_model,
    train_user_models,
)
from .harness import ExperimentConfig, config_from_sources
from .placement import SchemeId, build_schedule, load_schedule, save_schedule
from .preference import aggregate_preference, profile_from_counts

_BASELINE_KINDS = ("last-value", "slot-mean", "static-zipf")


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", default=None, help="flat key = value config file")
    group = parser.add_argument_group("config overrides")
    for f in fields(ExperimentConfig):
        group.add_argument(f"--{f.name}", default=None, metavar="V", help=argparse.SUPPRESS)


def _config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    overrides = {f.name: getattr(args, f.name) for f in fields(ExperimentConfig)}
    return config_from_sources(args.config, overrides)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="prefcache", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic request history CSV")
    p.add_argument("--out", default=None, help="output CSV (default <out_dir>/dataset.csv)")
    _add_config_flags(p)

    p = sub.add_parser("train", help="train per-user forecasters and forecast the horizon")
    p.add_argument("--data", required=True, help="request history CSV")
    p.add_argument("--models-dir", default=None, help="directory for model dumps")
    p.add_argument("--forecast-out", default=None, help="forecast CSV path")
    _add_config_flags(p)

    p = sub.add_parser("forecast", help="forecast with saved models or a baseline")
    p.add_argument("--data", required=True)
    p.add_argument("--models-dir", default=None, help="saved models (required for --method lstm)")
    p.add_argument("--method", default="lstm", choices=("lstm",) + _BASELINE_KINDS)
    p.add_argument("--out", default=None)
    _add_config_flags(p)

    p = sub.add_parser("place", help="build a placement schedule from forecasts")
    p.add_argument("--forecast", required=True, help="forecast CSV")
    p.add_argument("--scheme", required=True, choices=[s.value for s in SchemeId])
    p.add_argument("--data", default=None, help="history CSV (required for static-zipf)")
    p.add_argument("--out", default=None)
    _add_config_flags(p)

    p = sub.add_parser("evaluate", help="cost of a stored schedule")
    p.add_argument("--schedule", required=True)
    p.add_argument("--forecast", required=True, help="forecast CSV for the preference weights")
    p.add_argument("--data", default=None, help="history CSV (needed for rho_mode=oracle)")
    p.add_argument("--out", default=None, help="optional single-row results CSV")
    _add_config_flags(p)

    p = sub.add_parser("sweep", help="multi-seed capacity sweep")
    p.add_argument("--timing", action="store_true", help="include wall_time in results.csv")
    _add_config_flags(p)

    p = sub.add_parser("compare-static", help="static baseline vs dynamic homogeneous")
    _add_config_flags(p)

    return parser


def _out_dir(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _cmd_gen(args) -> int:
    cfg = _config_from_args(args)
    dataset = harness.generate_dataset(cfg, cfg.seed)
    out = Path(args.out) if args.out else _out_dir(cfg) / "dataset.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    save_request_matrix(dataset, out, extra_comments=(harness.config_comment(cfg),))
    print(f"wrote {dataset.slots} slots x {dataset.num_users} users x {dataset.num_contents} contents to {out}")
    return 0


def _history_slice(cfg: ExperimentConfig, dataset: RequestMatrix) -> RequestMatrix:
    n = min(cfg.history_slots, dataset.slots)
    return RequestMatrix(dataset.counts[:n], seed=dataset.seed)


def _cmd_train(args) -> int:
    cfg = _config_from_args(args)
    dataset = load_request_matrix(args.data)
    history = _history_slice(cfg, dataset)
    models = train_user_models(history.counts.transpose(1, 0, 2), cfg.train_config(cfg.seed))
    models_dir = Path(args.models_dir) if args.models_dir else _out_dir(cfg) / "models"
    models_dir.mkdir(parents=True, exist_ok=True)
    for u, model in enumerate(models):
        save_model(model, models_dir / f"user-{u:04d}.npz")
    forecast = forecast_all(models, history, cfg.horizon)
    fc_path = Path(args.forecast_out) if args.forecast_out else _out_dir(cfg) / "forecast.csv"
    save_forecast(forecast, fc_path, seed=cfg.seed)
    print(f"trained {len(models)} models -> {models_dir}; forecast {forecast.horizon} slots -> {fc_path}")
    return 0


def _cmd_forecast(args) -> int:
    cfg = _config_from_args(args)
    dataset = load_request_matrix(args.data)
    history = _history_slice(cfg, dataset)
    if args.method == "lstm":
        if not args.models_dir:
            raise SystemExit("--models-dir is required for --method lstm")
        models = [
            load_model(Path(args.models_dir) / f"user-{u:04d}.npz") for u in range(history.num_users)
        ]
        forecast = forecast_all(models, history, cfg.horizon)
    else:
        forecast = baseline_forecast(args.method, history, cfg.horizon)
    out = Path(args.out) if args.out else _out_dir(cfg) / "forecast.csv"
    save_forecast(forecast, out, seed=cfg.seed)
    print(f"forecast {forecast.horizon} slots via {args.method} -> {out}")
    return 0


def _forecast_joints(forecast):
    profiles = [
        profile_from_counts(forecast.counts[k], slot=forecast.start_slot + k)
        for k in range(forecast.horizon)
    ]
    return np.stack([p.joint for p in profiles]), profiles


def _cmd_place(args) -> int:
    cfg = _config_from_args(args)
    forecast = load_forecast(args.forecast)
    joints, _ = _forecast_joints(forecast)
    history = None
    if args.scheme == SchemeId.STATIC_ZIPF.value:
        if not args.data:
            raise SystemExit("--data is required for the static-zipf scheme")
        history = _history_slice(cfg, load_request_matrix(args.data))
    topo = cfg.topology()
    sched = build_schedule(args.scheme, joints, topo, history=history)
    sched.check_capacity(topo)
    out = Path(args.out) if args.out else _out_dir(cfg) / f"schedule-{args.scheme}.csv"
    save_schedule(sched, out, scheme=args.scheme)
    print(f"schedule for {args.scheme} over {sched.num_slots} slots -> {out}")
    return 0


def _cmd_evaluate(args) -> int:
    cfg = _config_from_args(args)
    sched, scheme = load_schedule(args.schedule)
    forecast = load_forecast(args.forecast)
    if cfg.rho_mode == "oracle":
        if not args.data:
            raise SystemExit("--data is required for rho_mode=oracle")
        dataset = load_request_matrix(args.data)
        n = cfg.history_slots
        if dataset.slots < n + cfg.horizon:
            raise SystemExit("dataset too short for oracle preference weights")
        profiles = [
            profile_from_counts(dataset.counts[n + k], slot=n + k) for k in range(cfg.horizon)
        ]
    else:
        _, profiles = _forecast_joints(forecast)
    rho = aggregate_preference(profiles)
    topo = cfg.topology()
    sched.check_capacity(topo)
    costs = cfg.cost_params()
    from .cachemodel import average_cost_het, average_cost_hom
    from .placement import indicators_to_probabilities, schedule_to_hom

    if sched.is_tier_uniform():
        cost = average_cost_hom(schedule_to_hom(sched, topo), rho.rho, topo, costs)
    else:
        cost = average_cost_het(indicators_to_probabilities(sched, topo), rho.rho, topo, costs)
    label = scheme or "schedule"
    print(f"{label}: average cost {cost}")
    if args.out:
        row = harness.ResultRow(label, topo.bs_capacity, topo.user_capacity, cost, cfg.seed, 0.0)
        harness.write_results([row], args.out)
    return 0


def _cmd_sweep(args) -> int:
    cfg = _config_from_args(args)
    rows = harness.run_experiment(cfg)
    out = _out_dir(cfg)
    harness.write_results(rows, out / "results.csv", include_timing=args.timing)
    harness.write_summary(rows, out / "summary.csv")
    harness.write_plot_data(rows, out / "plotdata.csv", cfg.sweep_axis)
    print(f"{len(rows)} result rows -> {out / 'results.csv'}")
    for (scheme, c_b, c_d), costs in sorted(harness._grouped(rows).items()):
        print(f"  {scheme:12s} c_b={c_b:3d} c_d={c_d:3d} cost={np.mean(costs):.3f}")
    return 0


def _cmd_compare_static(args) -> int:
    cfg = _config_from_args(args)
    rows, table = harness.compare_static_dynamic(cfg)
    out = _out_dir(cfg)
    harness.write_results(rows, out / "results.csv")
    harness.write_comparison(table, out / "comparison.csv")
    for row in table:
        print(
            f"c_b={row['c_b']:3d} c_d={row['c_d']:3d} "
            f"static={row['static_cost']:.3f} dynamic={row['dynamic_cost']:.3f} "
            f"diff={row['difference']:.3f}"
        )
    return 0


_HANDLERS = {
    "gen": _cmd_gen,
    "train": _cmd_train,
    "forecast": _cmd_forecast,
    "place": _cmd_place,
    "evaluate": _cmd_evaluate,
    "sweep": _cmd_sweep,
    "compare-static": _cmd_compare_static,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return _HANDLERS[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
