#!/usr/bin/env python3
"""Cost-vs-user-cache-size experiment: sweep C_d at fixed BS cache size."""

import argparse
from pathlib import Path

from prefcache.harness import (
    ExperimentConfig,
    run_experiment,
    write_plot_data,
    write_results,
    write_summary,
)

ALL_SCHEMES = ("bs-first", "user-first", "overlapping", "homogeneous", "static-zipf")


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-dir", default="results/user-sweep")
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--num-seeds", type=int, default=5)
    ap.add_argument("--hidden-dim", type=int, default=32)
    ap.add_argument("--epochs", type=int, default=100)
    args = ap.parse_args()

    cfg = ExperimentConfig(
        bs_capacity=12, hidden_dim=args.hidden_dim, epochs=args.epochs, patience=12,
        schemes=ALL_SCHEMES, sweep_axis="cd", sweep_min=1, sweep_max=4,
        seed=args.seed, num_seeds=args.num_seeds, out_dir=args.out_dir,
    )
    rows = run_experiment(cfg)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_results(rows, out / "results.csv")
    write_summary(rows, out / "summary.csv")
    write_plot_data(rows, out / "plotdata.csv", cfg.sweep_axis)
    print(f"{len(rows)} rows -> {out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
