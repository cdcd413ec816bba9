"""Experiment configuration: dataclass schema, YAML loading, validation.

All fields carry explicit units in their names (years, per-year rates).
Validation collects every problem before aborting so a bad config reports all
of its defects at once.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, replace

import numpy as np
import yaml

from . import nn
from .market import DefaultParams, MarketParams
from .portfolio import (
    ContractSpec,
    PortfolioSpec,
    benchmark_option_portfolio,
    benchmark_risky_portfolio,
)

__all__ = ["ExperimentConfig", "load_config", "validate_config", "config_digest"]


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce one experiment end to end."""

    # market (currency / per-year / per-sqrt-year units)
    n_assets: int = 2
    spot: tuple = (100.0, 100.0)
    rate_per_year: float = 0.05
    dividend_per_year: tuple = (0.1, 0.1)
    sigma_per_sqrt_year: tuple = (0.2, 0.2)
    correlation: float = 0.0  # common off-diagonal correlation
    horizon_years: float = 3.0

    # exercise / monitoring grid
    n_exercise_dates: int = 9
    monitor_steps: int = 4

    # portfolio
    portfolio_preset: str = "options8"  # options8 | risky9 | custom
    contracts: tuple = ()  # descriptors for portfolio_preset == "custom"
    collateral: float = 35.0

    # default model grid
    wwr_grid: tuple = (-0.2, 0.0, 0.2)
    credit_spread_grid: tuple = (0.0, 0.1, 0.2)
    recovery: float = 0.0
    focus_cell: tuple = (0.0, 0.1)  # (b, h_bar) cell for dynamic-CVA curves

    # networks
    hidden_layers: tuple = (30, 30, 30)
    augment_payoffs: bool = True

    # training schedules
    batch_size: int = 4096
    policy_batches: int = 600
    risky_policy_batches: int = 400
    regression_batches: int = 500
    lr_start: float = 1e-2
    lr_end: float = 1e-6
    risky_lr_start: float = 3e-3
    lr_segments: int = 6

    # path counts (m_reg = m_val)
    m_train: int = 2**17
    m_val: int = 2**17

    # risk levels
    pfe_levels: tuple = (0.025, 0.975)
    es_level: float = 0.975

    # reproducibility / outputs
    master_seed: int = 2024
    output_dir: str = "runs"

    def market_params(self) -> MarketParams:
        rho = np.full((self.n_assets, self.n_assets), self.correlation)
        np.fill_diagonal(rho, 1.0)
        return MarketParams(
            s0=np.asarray(self.spot, dtype=float),
            r=self.rate_per_year,
            q=np.asarray(self.dividend_per_year, dtype=float),
            sigma=np.asarray(self.sigma_per_sqrt_year, dtype=float),
            rho=rho,
            horizon=self.horizon_years,
        )

    def exercise_dates(self) -> tuple:
        n = self.n_exercise_dates
        return tuple(self.horizon_years * k / n for k in range(1, n + 1))

    def build_portfolio(self) -> PortfolioSpec:
        if self.portfolio_preset == "options8":
            return benchmark_option_portfolio()
        if self.portfolio_preset == "risky9":
            return benchmark_risky_portfolio(collateral=self.collateral)
        if self.portfolio_preset == "custom":
            contracts = tuple(
                ContractSpec(
                    contract_id=c["id"],
                    kind=c["kind"],
                    strike=float(c["strike"]),
                    exercise_dates=tuple(c.get("exercise_dates", self.exercise_dates())),
                    assets=tuple(c.get("assets", (0,))),
                    scale=float(c.get("scale", 1.0)),
                    margined=bool(c.get("margined", False)),
                )
                for c in self.contracts
            )
            return PortfolioSpec(contracts=contracts, netting=self.collateral > 0, collateral=self.collateral)
        raise ValueError(f"unknown portfolio preset {self.portfolio_preset!r}")

    def default_params(self, b: float, h_bar: float) -> DefaultParams:
        return DefaultParams(h_bar=h_bar, b=b, recovery=self.recovery, monitor_steps=self.monitor_steps)

    def policy_schedule(self) -> nn.TrainSchedule:
        return self._schedule(self.policy_batches, self.lr_start, self.lr_end)

    def risky_policy_schedule(self) -> nn.TrainSchedule:
        return self._schedule(self.risky_policy_batches, self.risky_lr_start, self.lr_end)

    def regression_schedule(self) -> nn.TrainSchedule:
        return self._schedule(self.regression_batches, self.lr_start, max(self.lr_end, 1e-5))

    def _schedule(self, n_batches: int, lr_start: float, lr_end: float) -> nn.TrainSchedule:
        return nn.TrainSchedule(
            batch_size=self.batch_size,
            n_batches=n_batches,
            lr_start=lr_start,
            lr_end=lr_end,
            decay_every=max(1, -(-n_batches // self.lr_segments)),
        )


def validate_config(cfg: ExperimentConfig) -> list[str]:
    """Return every validation failure (empty list means the config is sound)."""
    errors: list[str] = []
    if cfg.n_assets < 1:
        errors.append("n_assets must be >= 1")
    for name in ("spot", "dividend_per_year", "sigma_per_sqrt_year"):
        if len(getattr(cfg, name)) != cfg.n_assets:
            errors.append(f"{name} must have n_assets={cfg.n_assets} entries")
    if any(s <= 0 for s in cfg.spot):
        errors.append("spot prices must be positive")
    if any(s < 0 for s in cfg.sigma_per_sqrt_year):
        errors.append("volatilities must be non-negative")
    if not -1.0 <= cfg.correlation <= 1.0:
        errors.append("correlation must lie in [-1, 1]")
    if cfg.horizon_years <= 0:
        errors.append("horizon_years must be positive")
    if cfg.n_exercise_dates < 1:
        errors.append("n_exercise_dates must be >= 1")
    if cfg.monitor_steps < 1:
        errors.append("monitor_steps must be >= 1")
    if cfg.portfolio_preset not in ("options8", "risky9", "custom"):
        errors.append(f"unknown portfolio_preset {cfg.portfolio_preset!r}")
    if cfg.portfolio_preset == "custom" and not cfg.contracts:
        errors.append("custom portfolio needs contract descriptors")
    if not 0.0 <= cfg.recovery < 1.0:
        errors.append("recovery must lie in [0, 1)")
    if cfg.collateral < 0:
        errors.append("collateral must be >= 0")
    if tuple(cfg.focus_cell) and (
        cfg.focus_cell[0] not in tuple(cfg.wwr_grid) or cfg.focus_cell[1] not in tuple(cfg.credit_spread_grid)
    ):
        errors.append("focus_cell must be a cell of the (wwr_grid, credit_spread_grid)")
    for name in ("m_train", "m_val"):
        m = getattr(cfg, name)
        if m < 1:
            errors.append(f"{name} must be >= 1")
        elif m % cfg.batch_size != 0:
            errors.append(f"batch_size {cfg.batch_size} does not divide {name}={m}")
    if not all(0 < lv < 1 for lv in cfg.pfe_levels):
        errors.append("pfe_levels must lie strictly inside (0, 1)")
    if not 0 < cfg.es_level < 1:
        errors.append("es_level must lie strictly inside (0, 1)")
    if cfg.lr_end > cfg.lr_start or cfg.lr_start <= 0:
        errors.append("need 0 < lr_end <= lr_start")
    for name in ("policy_batches", "risky_policy_batches", "regression_batches", "lr_segments"):
        if getattr(cfg, name) < 1:
            errors.append(f"{name} must be >= 1")
    return errors


def _coerce(value, template):
    if isinstance(template, tuple):
        return tuple(value)
    if isinstance(template, bool):
        return bool(value)
    if isinstance(template, int) and not isinstance(value, bool):
        return int(value)
    if isinstance(template, float):
        return float(value)
    return value


def load_config(path=None, overrides: dict | None = None) -> ExperimentConfig:
    """Load a YAML config file, apply overrides, validate exhaustively."""
    cfg = ExperimentConfig()
    data = {}
    if path is not None:
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
    data.update(overrides or {})
    fields = {f.name: getattr(cfg, f.name) for f in dataclasses.fields(cfg)}
    unknown = sorted(set(data) - set(fields))
    updates = {k: _coerce(v, fields[k]) for k, v in data.items() if k in fields}
    cfg = replace(cfg, **updates)
    errors = ([f"unknown config field {k!r}" for k in unknown]) + validate_config(cfg)
    if errors:
        raise ValueError("invalid configuration:\n  - " + "\n  - ".join(errors))
    return cfg


def config_digest(cfg: ExperimentConfig) -> str:
    payload = json.dumps(dataclasses.asdict(cfg), sort_keys=True, default=str)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]
