#!/usr/bin/env python3
"""Risk-free benchmark: per-contract values, portfolio total, EE/PFE curves.

Desk-scale by default (2^17 paths); pass --paper-scale for 2^20.
"""

import argparse
import time

from deepcva.config import load_config
from deepcva.experiments import run_risk_free


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config", default=None)
    parser.add_argument("--outdir", default="runs/riskfree")
    parser.add_argument("--seed", type=int, default=2024)
    parser.add_argument("--paper-scale", action="store_true", help="use 2^20 paths")
    args = parser.parse_args()

    overrides = {"portfolio_preset": "options8", "master_seed": args.seed}
    if args.paper_scale:
        overrides.update({"m_train": 2**20, "m_val": 2**20})
    cfg = load_config(args.config, overrides)

    t0 = time.perf_counter()
    run = run_risk_free(cfg, outdir=args.outdir)
    print(f"finished in {time.perf_counter() - t0:.0f}s; artifacts in {args.outdir}")
    for row in run.table_rows()[1:]:
        print(f"  {row[0]:>6} {row[1]:<12} {row[2]:10.4f}  (se {row[3]:.4f})")


if __name__ == "__main__":
    main()
