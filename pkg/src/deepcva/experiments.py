"""Experiment drivers: risk-free valuation, the (b, h_bar) CVA grid, exports.

These orchestrate single-machine runs end to end: simulate paths, learn the
exercise policies, fit the value surfaces, evaluate portfolio values with
common random numbers, and assemble plot-ready tables and curves. A master
seed fans out into labelled streams so any run reproduces bit for bit.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, market, policy, valuation
from .config import ExperimentConfig, config_digest
from .cva import CvaCell, CvaReport, analytic_default_probs, cva_from_ee, dynamic_cva, risk_measure_curves
from .portfolio import PortfolioSpec
from .seeds import SeedBank

__all__ = [
    "RunManifest",
    "RiskFreeRun",
    "RiskyGridRun",
    "simulate_batches",
    "run_risk_free",
    "run_risky_grid",
    "export_riskfree",
    "export_report",
]


@dataclass
class RunManifest:
    """Reproducibility record: what ran, from which seeds, producing what."""

    config_digest: str
    master_seed: int
    component_seeds: dict = field(default_factory=dict)
    artifacts: dict = field(default_factory=dict)
    timings_seconds: dict = field(default_factory=dict)
    version: str = __version__

    def write(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.__dict__, fh, indent=2, sort_keys=True)


def _seed_table(bank: SeedBank) -> dict:
    labels = [("paths", "train"), ("paths", "val"), ("defaults", "train"), ("defaults", "val")]
    return {"/".join(label): bank.seed_int(*label) for label in labels}


def simulate_batches(cfg: ExperimentConfig, portfolio: PortfolioSpec, bank: SeedBank):
    """Training and valuation path batches from disjoint seed streams."""
    params = cfg.market_params()
    grid = market.make_grid(portfolio.union_dates, monitor_steps=cfg.monitor_steps)
    train = market.simulate_paths(params, grid, cfg.m_train, bank.seed_int("paths", "train"))
    val = market.simulate_paths(params, grid, cfg.m_val, bank.seed_int("paths", "val"))
    return train, val


@dataclass
class RiskFreeRun:
    """Phase I + II artifacts and figures for the default-free portfolio."""

    config: ExperimentConfig
    portfolio: PortfolioSpec
    policy: policy.DecisionPolicy
    surface_ir: valuation.ValueSurface
    surface_pr: valuation.ValueSurface
    per_contract_values: np.ndarray
    per_contract_se: np.ndarray
    total_value: float
    total_se: float
    exposure_ir: valuation.ExposureProfile
    exposure_pr: valuation.ExposureProfile
    val_batch: market.PathBatch
    train_batch: market.PathBatch
    manifest: RunManifest

    def table_rows(self) -> list:
        rows = [["contract", "kind", "value", "se"]]
        for j, c in enumerate(self.portfolio.contracts):
            rows.append([c.contract_id, c.kind, self.per_contract_values[j], self.per_contract_se[j]])
        rows.append(["total", "", self.total_value, self.total_se])
        return rows


def run_risk_free(cfg: ExperimentConfig, outdir=None) -> RiskFreeRun:
    """Learn the risk-free policy, fit IR/PR surfaces, report values and exposures."""
    bank = SeedBank(cfg.master_seed)
    portfolio = cfg.build_portfolio()
    manifest = RunManifest(config_digest(cfg), cfg.master_seed, component_seeds=_seed_table(bank))
    clock = time.perf_counter()

    train, val = simulate_batches(cfg, portfolio, bank)
    manifest.timings_seconds["simulate"] = round(time.perf_counter() - clock, 3)

    clock = time.perf_counter()
    pol = policy.train_risk_free(
        train, portfolio, cfg.policy_schedule(), bank, hidden=cfg.hidden_layers, augment_payoffs=cfg.augment_payoffs
    )
    manifest.timings_seconds["phase1"] = round(time.perf_counter() - clock, 3)

    result = policy.evaluate_stopping(pol, val, portfolio)
    flows = result.contract_flows_at_zero()
    per_contract = flows.mean(axis=0)
    per_se = flows.std(axis=0, ddof=1) / np.sqrt(val.n_paths)
    total, total_se = policy.value_at_zero(result)

    clock = time.perf_counter()
    targets = valuation.build_targets(pol, val, portfolio, times="monitor")
    surf_ir = valuation.fit_ir(
        targets, val, cfg.regression_schedule(), bank, hidden=cfg.hidden_layers,
        portfolio_hash=portfolio.content_hash(),
    )
    surf_pr = valuation.fit_pr(
        targets, val, cfg.regression_schedule(), bank, hidden=cfg.hidden_layers,
        portfolio_hash=portfolio.content_hash(),
    )
    manifest.timings_seconds["phase2"] = round(time.perf_counter() - clock, 3)

    exposure_ir = valuation.exposure_profile(surf_ir, val, result, levels=cfg.pfe_levels)
    exposure_pr = valuation.exposure_profile(surf_pr, val, result, levels=cfg.pfe_levels)

    run = RiskFreeRun(
        config=cfg,
        portfolio=portfolio,
        policy=pol,
        surface_ir=surf_ir,
        surface_pr=surf_pr,
        per_contract_values=per_contract,
        per_contract_se=per_se,
        total_value=total,
        total_se=total_se,
        exposure_ir=exposure_ir,
        exposure_pr=exposure_pr,
        val_batch=val,
        train_batch=train,
        manifest=manifest,
    )
    if outdir is not None:
        export_riskfree(run, outdir)
    return run


def _evaluate_cell(cfg, portfolio, surf_ir, pol_v, dp, val_def, pol_u, pol_a):
    """All five portfolio-value estimates of one grid cell on common paths."""
    res_vbar = policy.evaluate_stopping(pol_v, val_def, portfolio, dp=dp, surface=surf_ir)
    u_bar, se_u_bar = policy.value_at_zero(res_vbar)
    a_bar, se_a_bar = policy.value_at_zero(res_vbar, netted=True, collateral=portfolio.collateral)
    res_u = policy.evaluate_stopping(pol_u, val_def, portfolio, dp=dp, surface=surf_ir)
    u_star, se_u_star = policy.value_at_zero(res_u)
    res_a = policy.evaluate_stopping(pol_a, val_def, portfolio, dp=dp, surface=surf_ir)
    a_star, se_a_star = policy.value_at_zero(res_a, netted=True, collateral=portfolio.collateral)
    return {
        "u_star": (u_star, se_u_star),
        "u_bar": (u_bar, se_u_bar),
        "a_star": (a_star, se_a_star),
        "a_bar": (a_bar, se_a_bar),
        "res_u": res_u,
        "res_a": res_a,
        "res_vbar": res_vbar,
    }


@dataclass
class RiskyGridRun:
    config: ExperimentConfig
    portfolio: PortfolioSpec
    report: CvaReport
    riskfree_policy: policy.DecisionPolicy
    surface_ir: valuation.ValueSurface
    manifest: RunManifest
    focus_policies: dict = field(default_factory=dict)


def run_risky_grid(cfg: ExperimentConfig, outdir=None, riskfree: RiskFreeRun | None = None) -> RiskyGridRun:
    """Tables of portfolio values and CVA figures over the (b, h_bar) grid.

    The risk-free policy and its value surface are shared by every cell (and
    rebuilt here unless a compatible risk-free run is supplied). Within a cell
    all five value estimates use the same evaluation paths and default draws;
    across cells the same default triggers are reused, which couples the cells
    and stabilises monotonicity comparisons. Cells with identically zero
    intensity reuse the risk-free policy outright — no default can occur, the
    risky problems provably coincide with the risk-free one, and every CVA is
    exactly zero (reported as deterministic).
    """
    bank = SeedBank(cfg.master_seed)
    portfolio = cfg.build_portfolio()
    manifest = RunManifest(config_digest(cfg), cfg.master_seed, component_seeds=_seed_table(bank))
    clock = time.perf_counter()

    if riskfree is not None and riskfree.portfolio.content_hash() == portfolio.content_hash():
        train, val = riskfree.train_batch, riskfree.val_batch
        pol_v, surf_ir = riskfree.policy, riskfree.surface_ir
    else:
        train, val = simulate_batches(cfg, portfolio, bank)
        pol_v = policy.train_risk_free(
            train, portfolio, cfg.policy_schedule(), bank,
            hidden=cfg.hidden_layers, augment_payoffs=cfg.augment_payoffs,
        )
        targets = valuation.build_targets(pol_v, val, portfolio, times="monitor")
        surf_ir = valuation.fit_ir(
            targets, val, cfg.regression_schedule(), bank, hidden=cfg.hidden_layers,
            portfolio_hash=portfolio.content_hash(),
        )
    res_v = policy.evaluate_stopping(pol_v, val, portfolio)
    ups_v, se_v = policy.value_at_zero(res_v)
    manifest.timings_seconds["riskfree_stage"] = round(time.perf_counter() - clock, 3)

    report = CvaReport(
        metadata={
            "config_digest": config_digest(cfg),
            "master_seed": cfg.master_seed,
            "m_train": cfg.m_train,
            "m_val": cfg.m_val,
            "recovery": cfg.recovery,
            "collateral": portfolio.collateral,
            "component_seeds": _seed_table(bank),
            "es_level": cfg.es_level,
        }
    )

    focus = tuple(cfg.focus_cell)
    focus_policies: dict = {}
    for b in cfg.wwr_grid:
        for h_bar in cfg.credit_spread_grid:
            cell_clock = time.perf_counter()
            dp = cfg.default_params(b, h_bar)
            if h_bar == 0.0 and b == 0.0:
                # identically zero intensity: the risky problems coincide with
                # the risk-free one and no path can default
                cell = CvaCell(
                    b=b, h_bar=h_bar,
                    upsilon_v=ups_v, upsilon_u_star=ups_v, upsilon_u_bar=ups_v,
                    upsilon_a_star=ups_v, upsilon_a_bar=ups_v,
                    se_v=se_v, deterministic=True,
                )
                report.cells.append(cell)
                continue
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
            est = _evaluate_cell(cfg, portfolio, surf_ir, pol_v, dp, val_def, pol_u, pol_a)
            cell = CvaCell(
                b=b, h_bar=h_bar,
                upsilon_v=ups_v,
                upsilon_u_star=est["u_star"][0], upsilon_u_bar=est["u_bar"][0],
                upsilon_a_star=est["a_star"][0], upsilon_a_bar=est["a_bar"][0],
                se_v=se_v,
                se_u_star=est["u_star"][1], se_u_bar=est["u_bar"][1],
                se_a_star=est["a_star"][1], se_a_bar=est["a_bar"][1],
            )
            report.cells.append(cell)
            manifest.timings_seconds[f"cell_b{b:g}_h{h_bar:g}"] = round(time.perf_counter() - cell_clock, 3)
            if (b, h_bar) == focus:
                focus_policies = {"pol_u": pol_u, "pol_a": pol_a, "val_def": val_def, "dp": dp, "est": est}

    if focus_policies:
        clock = time.perf_counter()
        _focus_cell_curves(cfg, portfolio, report, bank, pol_v, surf_ir, res_v, val, focus_policies)
        manifest.timings_seconds["focus_curves"] = round(time.perf_counter() - clock, 3)

    run = RiskyGridRun(
        config=cfg,
        portfolio=portfolio,
        report=report,
        riskfree_policy=pol_v,
        surface_ir=surf_ir,
        manifest=manifest,
        focus_policies=focus_policies,
    )
    if outdir is not None:
        export_report(run, outdir)
    return run


def _focus_cell_curves(cfg, portfolio, report, bank, pol_v, surf_ir, res_v, val, focus):
    """Dynamic-CVA risk-measure curves and the EE-integral cross-check for the
    focus cell, under both the risky and the risk-free exercise strategies."""
    dp = focus["dp"]
    val_def = focus["val_def"]
    est = focus["est"]
    cell = report.cell(dp.b, dp.h_bar)
    sched = cfg.regression_schedule()
    hidden = cfg.hidden_layers
    phash = portfolio.content_hash()

    pol_u, pol_a = focus["pol_u"], focus["pol_a"]
    t_u = valuation.build_risky_targets(pol_u, val_def, portfolio, dp, surf_ir, times="monitor")
    surf_u = valuation.fit_ir(t_u, val_def, sched, bank, hidden=hidden, portfolio_hash=phash, survivors_only=True)
    t_ubar = valuation.build_risky_targets(pol_v, val_def, portfolio, dp, surf_ir, times="monitor")
    surf_ubar = valuation.fit_ir(t_ubar, val_def, sched, bank, hidden=hidden, portfolio_hash=phash, survivors_only=True)
    t_a = valuation.build_netted_targets(focus["est"]["res_a"], val_def, portfolio.collateral, times="monitor")
    surf_a = valuation.fit_pr(t_a, val_def, sched, bank, hidden=hidden, portfolio_hash=phash, survivors_only=True)
    t_abar = valuation.build_netted_targets(focus["est"]["res_vbar"], val_def, portfolio.collateral, times="monitor")
    surf_abar = valuation.fit_pr(t_abar, val_def, sched, bank, hidden=hidden, portfolio_hash=phash, survivors_only=True)

    samples = {
        "cva_risky": dynamic_cva(surf_ir, surf_u, val_def, est["res_u"], netted=False, anchor=cell.cva),
        "cva_riskfree": dynamic_cva(surf_ir, surf_ubar, val_def, est["res_vbar"], netted=False, anchor=cell.cva_bar),
        "cva_net_risky": dynamic_cva(surf_ir, surf_a, val_def, est["res_a"], netted=True, anchor=cell.cva_net),
        "cva_net_riskfree": dynamic_cva(surf_ir, surf_abar, val_def, est["res_vbar"], netted=True, anchor=cell.cva_bar_net),
    }
    for name, sample in samples.items():
        times, e, var, es, es_se, n_surv = risk_measure_curves(sample, cfg.es_level)
        report.curves[name] = {
            "time": times, "e_cva": e, "var_cva": var, "es_cva": es, "es_se": es_se, "n_survivors": n_surv,
        }

    if dp.b == 0.0:
        exposure = valuation.exposure_profile(surf_ir, val, res_v, levels=cfg.pfe_levels, netted_exposure=False)
        ee_integral = cva_from_ee(exposure, dp, analytic_default_probs(dp, exposure.times))
        report.metadata["ee_integral_cell"] = [dp.b, dp.h_bar]
        report.metadata["cva_bar_from_ee"] = ee_integral
        report.metadata["cva_bar_simulated"] = cell.cva_bar


def _write_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerows(rows)


def export_riskfree(run: RiskFreeRun, outdir, formats=("csv", "json")) -> dict:
    """Write the risk-free artifacts: trained nets, per-contract table, curves."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    artifacts = {}
    policy_path = out / "riskfree_policy.npz"
    policy.save_policy(policy_path, run.policy)
    artifacts["policy"] = str(policy_path)
    for name, surf in (("surface_ir", run.surface_ir), ("surface_pr", run.surface_pr)):
        path = out / f"{name}.npz"
        valuation.save_surface(path, surf)
        artifacts[name] = str(path)
    if "csv" in formats:
        _write_csv(out / "riskfree_values.csv", run.table_rows())
        _write_csv(out / "exposure_ir.csv", run.exposure_ir.as_rows())
        _write_csv(out / "exposure_pr.csv", run.exposure_pr.as_rows())
        artifacts["values_csv"] = str(out / "riskfree_values.csv")
    if "json" in formats:
        payload = {
            "per_contract": {
                str(c.contract_id): {"kind": c.kind, "value": run.per_contract_values[j], "se": run.per_contract_se[j]}
                for j, c in enumerate(run.portfolio.contracts)
            },
            "total": {"value": run.total_value, "se": run.total_se},
        }
        with open(out / "riskfree_report.json", "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
        artifacts["report_json"] = str(out / "riskfree_report.json")
    run.manifest.artifacts.update(artifacts)
    run.manifest.write(out / "manifest.json")
    return artifacts


def export_report(run: RiskyGridRun, outdir, formats=("csv", "json")) -> dict:
    """Write the grid report: valuation table, CVA tables, risk-measure curves."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    report = run.report
    artifacts = {}
    if "json" in formats:
        with open(out / "cva_report.json", "w") as fh:
            fh.write(report.to_json())
        artifacts["report_json"] = str(out / "cva_report.json")
    if "csv" in formats:
        rows = [[
            "b", "h_bar", "upsilon_v", "upsilon_u_star", "upsilon_u_bar", "upsilon_a_star", "upsilon_a_bar",
            "se_v", "se_u_star", "se_u_bar", "se_a_star", "se_a_bar", "deterministic",
        ]]
        for c in report.cells:
            rows.append([
                c.b, c.h_bar, c.upsilon_v, c.upsilon_u_star, c.upsilon_u_bar, c.upsilon_a_star, c.upsilon_a_bar,
                c.se_v, c.se_u_star, c.se_u_bar, c.se_a_star, c.se_a_bar, int(c.deterministic),
            ])
        _write_csv(out / "upsilon.csv", rows)

        rows = [["b", "h_bar", "cva", "cva_bar", "rel_overest", "se_cva", "se_cva_bar", "deterministic"]]
        for c in report.cells:
            rows.append([
                c.b, c.h_bar, c.cva, c.cva_bar, c.rel_overestimation,
                c.se_cva("cva"), c.se_cva("cva_bar"), int(c.deterministic),
            ])
        _write_csv(out / "cva_no_netting.csv", rows)

        rows = [["b", "h_bar", "cva_net", "cva_bar_net", "rel_overest", "se_cva", "se_cva_bar", "deterministic"]]
        for c in report.cells:
            rows.append([
                c.b, c.h_bar, c.cva_net, c.cva_bar_net, c.rel_overestimation_net,
                c.se_cva("cva_net"), c.se_cva("cva_bar_net"), int(c.deterministic),
            ])
        _write_csv(out / "cva_netting.csv", rows)

        for name, curve in report.curves.items():
            rows = [list(curve.keys())]
            n = len(curve["time"])
            for k in range(n):
                rows.append([np.asarray(curve[key])[k] for key in curve])
            _write_csv(out / f"curve_{name}.csv", rows)
        artifacts["upsilon_csv"] = str(out / "upsilon.csv")
    run.manifest.artifacts.update(artifacts)
    run.manifest.write(out / "manifest.json")
    return artifacts
