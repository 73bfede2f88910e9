#!/usr/bin/env python3
"""Static popularity baseline vs dynamic homogeneous caching across C_b."""

import argparse
from pathlib import Path

from prefcache.harness import (
    ExperimentConfig,
    compare_static_dynamic,
    write_comparison,
    write_results,
)


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-dir", default="results/static-vs-dynamic")
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--num-seeds", type=int, default=5)
    ap.add_argument("--hidden-dim", type=int, default=32)
    ap.add_argument("--epochs", type=int, default=100)
    args = ap.parse_args()

    cfg = ExperimentConfig(
        hidden_dim=args.hidden_dim, epochs=args.epochs, patience=12,
        sweep_axis="cb", sweep_min=4, sweep_max=14,
        seed=args.seed, num_seeds=args.num_seeds, out_dir=args.out_dir,
    )
    rows, table = compare_static_dynamic(cfg)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_results(rows, out / "results.csv")
    write_comparison(table, out / "comparison.csv")
    for row in table:
        print(
            f"c_b={row['c_b']:3d} static={row['static_cost']:9.2f} "
            f"dynamic={row['dynamic_cost']:9.2f} diff={row['difference']:8.2f}"
        )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
