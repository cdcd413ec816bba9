"""Command-line driver.

Verbs: simulate, train-riskfree, train-risky, exposure, cva-grid, report.
Every config field can be overridden with repeated --set key=value flags; the
only environment variable honoured is DEEPCVA_OUTPUT_ROOT, which prefixes
relative output directories.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import experiments, market, policy, valuation
from .config import load_config
from .cva import CvaReport
from .seeds import SeedBank

__all__ = ["main", "build_parser"]


def _parse_override(text: str):
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"override {text!r} is not of the form key=value")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def _outdir(args) -> Path:
    root = os.environ.get("DEEPCVA_OUTPUT_ROOT", "")
    path = Path(args.outdir)
    if root and not path.is_absolute():
        path = Path(root) / path
    path.mkdir(parents=True, exist_ok=True)
    return path


def _load(args):
    overrides = dict(args.set or [])
    return load_config(args.config, overrides)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="deepcva",
        description="Neural exercise policies, exposure surfaces and CVA for derivative portfolios",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    def common(p):
        p.add_argument("--config", default=None, help="YAML config file (defaults apply otherwise)")
        p.add_argument("--set", action="append", type=_parse_override, metavar="KEY=VALUE",
                       help="override a config field (repeatable)")
        p.add_argument("--outdir", default="run", help="output directory (under DEEPCVA_OUTPUT_ROOT if relative)")

    p = sub.add_parser("simulate", help="simulate a path batch and dump it")
    common(p)
    p.add_argument("--paths", type=int, default=None, help="override the number of paths")

    p = sub.add_parser("train-riskfree", help="phase I + II for the risk-free portfolio")
    common(p)

    p = sub.add_parser("train-risky", help="risky policies for one (b, h_bar) cell from risk-free artifacts")
    common(p)
    p.add_argument("--riskfree-dir", default=None,
                   help="directory with risk-free artifacts (default: outdir)")
    p.add_argument("--wwr", type=float, default=0.0)
    p.add_argument("--credit-spread", type=float, default=0.1)

    p = sub.add_parser("exposure", help="EE/PFE curves from saved risk-free artifacts")
    common(p)

    p = sub.add_parser("cva-grid", help="full CVA grid: tables, curves, cross-checks")
    common(p)

    p = sub.add_parser("report", help="re-export tables from a saved cva_report.json")
    common(p)
    p.add_argument("--formats", default="csv,json")
    return parser


def _require_riskfree_artifacts(directory: Path):
    policy_path = directory / "riskfree_policy.npz"
    surface_path = directory / "surface_ir.npz"
    missing = [str(p) for p in (policy_path, surface_path) if not p.exists()]
    if missing:
        raise SystemExit(
            "risky valuation needs the risk-free policy and value surface first "
            f"(missing: {', '.join(missing)}); run train-riskfree"
        )
    return policy.load_policy(policy_path), valuation.load_surface(surface_path)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load(args) if args.verb != "report" else None
    except ValueError as exc:
        print(exc, file=sys.stderr)
        return 2
    out = _outdir(args)

    if args.verb == "simulate":
        bank = SeedBank(cfg.master_seed)
        portfolio = cfg.build_portfolio()
        grid = market.make_grid(portfolio.union_dates, monitor_steps=cfg.monitor_steps)
        n_paths = args.paths or cfg.m_train
        batch = market.simulate_paths(cfg.market_params(), grid, n_paths, bank.seed_int("paths", "train"))
        path = out / "paths.npz"
        market.save_batch(path, batch)
        print(f"wrote {path} ({n_paths} paths, {grid.times.shape[0]} grid times)")
        return 0

    if args.verb == "train-riskfree":
        run = experiments.run_risk_free(cfg, outdir=out)
        for row in run.table_rows()[1:]:
            print(f"{row[0]:>6} {row[1]:<12} {row[2]:10.4f}  (se {row[3]:.4f})")
        return 0

    if args.verb == "train-risky":
        rf_dir = Path(args.riskfree_dir) if args.riskfree_dir else out
        pol_v, surf_ir = _require_riskfree_artifacts(rf_dir)
        portfolio = cfg.build_portfolio()
        if pol_v.portfolio_hash != portfolio.content_hash():
            raise SystemExit("risk-free artifacts were trained on a different portfolio")
        bank = SeedBank(cfg.master_seed)
        train, val = experiments.simulate_batches(cfg, portfolio, bank)
        dp = cfg.default_params(args.wwr, args.credit_spread)
        train_def = market.sample_defaults(train, dp, bank.seed_int("defaults", "train"))
        val_def = market.sample_defaults(val, dp, bank.seed_int("defaults", "val"))
        pol_u = policy.train_risky_no_netting(
            train_def, portfolio, surf_ir, dp, cfg.risky_policy_schedule(), bank,
            hidden=cfg.hidden_layers, augment_payoffs=cfg.augment_payoffs, warm_from=pol_v,
        )
        pol_a = policy.train_risky_netted(
            train_def, portfolio, surf_ir, dp, cfg.risky_policy_schedule(), bank,
            hidden=cfg.hidden_layers, augment_payoffs=cfg.augment_payoffs, warm_from=pol_v,
        )
        policy.save_policy(out / "risky_policy.npz", pol_u)
        policy.save_policy(out / "risky_netted_policy.npz", pol_a)
        est = experiments._evaluate_cell(cfg, portfolio, surf_ir, pol_v, dp, val_def, pol_u, pol_a)
        for key in ("u_star", "u_bar", "a_star", "a_bar"):
            value, se = est[key]
            print(f"upsilon_{key}: {value:.4f} (se {se:.4f})")
        return 0

    if args.verb == "exposure":
        pol_v, surf_ir = _require_riskfree_artifacts(out)
        portfolio = cfg.build_portfolio()
        bank = SeedBank(cfg.master_seed)
        _, val = experiments.simulate_batches(cfg, portfolio, bank)
        result = policy.evaluate_stopping(pol_v, val, portfolio)
        profile = valuation.exposure_profile(surf_ir, val, result, levels=cfg.pfe_levels)
        path = out / "exposure_ir.csv"
        experiments._write_csv(path, profile.as_rows())
        print(f"wrote {path}")
        return 0

    if args.verb == "cva-grid":
        run = experiments.run_risky_grid(cfg, outdir=out)
        for cell in run.report.cells:
            print(
                f"b={cell.b:+.2f} h={cell.h_bar:.2f}  CVA {cell.cva:8.4f}  CVA-bar {cell.cva_bar:8.4f}  "
                f"net {cell.cva_net:8.4f} / {cell.cva_bar_net:8.4f}"
                + ("  [deterministic]" if cell.deterministic else "")
            )
        return 0

    if args.verb == "report":
        report_path = out / "cva_report.json"
        if not report_path.exists():
            raise SystemExit(f"no report at {report_path}; run cva-grid first")
        report = CvaReport.from_json(report_path.read_text())
        formats = tuple(f.strip() for f in args.formats.split(","))
        fake_run = experiments.RiskyGridRun(
            config=None, portfolio=None, report=report, riskfree_policy=None,
            surface_ir=None, manifest=experiments.RunManifest("reexport", 0),
        )
        experiments.export_report(fake_run, out, formats=formats)
        print(f"re-exported {report_path} as {', '.join(formats)}")
        return 0

    return 1


if __name__ == "__main__":
    raise SystemExit(main())
