#!/usr/bin/env python3
"""Cost-vs-BS-cache-size experiment: sweep C_b at fixed user cache size.

Writes results.csv / summary.csv / plotdata.csv under --out-dir.  --quick
shrinks the topology and training for a fast smoke run.
"""

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
    ap.add_argument("--out-dir", default="results/bs-sweep")
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--num-seeds", type=int, default=5)
    ap.add_argument("--hidden-dim", type=int, default=32)
    ap.add_argument("--epochs", type=int, default=100)
    ap.add_argument("--quick", action="store_true", help="small topology, short training")
    args = ap.parse_args()

    if args.quick:
        cfg = ExperimentConfig(
            num_bs=2, users_per_bs=4, num_contents=40, bs_capacity=4, user_capacity=2,
            history_slots=60, horizon=10, hidden_dim=8, epochs=30, patience=8,
            schemes=ALL_SCHEMES, sweep_axis="cb", sweep_min=2, sweep_max=6,
            seed=args.seed, num_seeds=args.num_seeds, out_dir=args.out_dir,
        )
    else:
        cfg = ExperimentConfig(
            hidden_dim=args.hidden_dim, epochs=args.epochs, patience=12,
            schemes=ALL_SCHEMES, sweep_axis="cb", sweep_min=4, sweep_max=14,
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
