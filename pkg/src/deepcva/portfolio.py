"""Contract set: payoffs, exercise schedules, netting and close-out algebra.

Payoff descriptors are a closed enumeration so portfolio configs stay
serialisable and every contract has a matching pricing oracle. Exercise states
(alive flags) are plain 0/1 arrays of shape (n_paths, J).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .market import MarketParams

__all__ = [
    "PAYOFF_KINDS",
    "OPTION_KINDS",
    "ContractSpec",
    "PortfolioSpec",
    "payoff_eval",
    "payoff_matrix",
    "terminal_decisions",
    "active_contracts",
    "future_value",
    "forward_value",
    "closeout_contract",
    "closeout_netted",
    "alive_flags",
    "benchmark_option_portfolio",
    "benchmark_risky_portfolio",
]

OPTION_KINDS = (
    "max-call",
    "max-put",
    "geo-call",
    "geo-put",
    "arith-call",
    "arith-put",
    "1d-call",
    "1d-put",
)
PAYOFF_KINDS = OPTION_KINDS + ("scaled-forward",)

_DATE_TOL = 1e-9


@dataclass(frozen=True)
class ContractSpec:
    """One derivative: payoff descriptor plus its exercise schedule.

    ``assets`` selects the underlying components; ``scale`` multiplies the
    scaled-forward payoff scale*(strike - x) and is ignored by option kinds.
    ``margined`` marks futures-style settlement: the contract's own payoff is
    exchanged through a margin account and enters value estimators without
    discounting (close-out reference values are always discounted).
    """

    contract_id: int
    kind: str
    strike: float
    exercise_dates: tuple
    assets: tuple = (0,)
    scale: float = 1.0
    margined: bool = False

    def __post_init__(self):
        if self.kind not in PAYOFF_KINDS:
            raise ValueError(f"unknown payoff kind {self.kind!r}; expected one of {PAYOFF_KINDS}")
        dates = tuple(float(t) for t in self.exercise_dates)
        if len(dates) == 0 or any(t <= 0.0 for t in dates) or any(
            b - a <= 0.0 for a, b in zip(dates, dates[1:])
        ):
            raise ValueError("exercise dates must be nonempty, sorted and > 0")
        object.__setattr__(self, "exercise_dates", dates)
        object.__setattr__(self, "assets", tuple(int(a) for a in self.assets))

    @property
    def maturity(self) -> float:
        return self.exercise_dates[-1]

    @property
    def is_option(self) -> bool:
        return self.kind in OPTION_KINDS

    def can_exercise_at(self, t: float) -> bool:
        return any(abs(t - s) <= _DATE_TOL for s in self.exercise_dates)

    def descriptor(self) -> dict:
        return {
            "id": self.contract_id,
            "kind": self.kind,
            "strike": self.strike,
            "assets": list(self.assets),
            "scale": self.scale,
            "margined": self.margined,
            "exercise_dates": list(self.exercise_dates),
        }


def payoff_eval(contract: ContractSpec, t: float, x: np.ndarray) -> np.ndarray:
    """Immediate payoff at time t for states x of shape (..., d).

    Identically zero past the contract's maturity; the scaled-forward pays
    only at maturity itself.
    """
    x = np.asarray(x, dtype=float)
    if t > contract.maturity + _DATE_TOL:
        return np.zeros(x.shape[:-1])
    sel = x[..., list(contract.assets)]
    k = contract.strike
    kind = contract.kind
    if kind == "max-call":
        return np.maximum(sel.max(axis=-1) - k, 0.0)
    if kind == "max-put":
        return np.maximum(k - sel.max(axis=-1), 0.0)
    if kind == "geo-call":
        return np.maximum(np.exp(np.log(sel).mean(axis=-1)) - k, 0.0)
    if kind == "geo-put":
        return np.maximum(k - np.exp(np.log(sel).mean(axis=-1)), 0.0)
    if kind == "arith-call":
        return np.maximum(sel.mean(axis=-1) - k, 0.0)
    if kind == "arith-put":
        return np.maximum(k - sel.mean(axis=-1), 0.0)
    if kind == "1d-call":
        return np.maximum(sel[..., 0] - k, 0.0)
    if kind == "1d-put":
        return np.maximum(k - sel[..., 0], 0.0)
    # scaled-forward: settles scale*(strike - x) at maturity only
    if abs(t - contract.maturity) <= _DATE_TOL:
        return contract.scale * (k - sel[..., 0])
    return np.zeros(x.shape[:-1])


def forward_value(contract: ContractSpec, params: MarketParams, t, x: np.ndarray) -> np.ndarray:
    """Closed-form value of a scaled-forward: scale*(K e^{-r(T-t)} - x e^{-q(T-t)})."""
    if contract.kind != "scaled-forward":
        raise ValueError("forward_value applies to scaled-forward contracts only")
    tau = contract.maturity - np.asarray(t, dtype=float)
    x1 = np.asarray(x, dtype=float)[..., contract.assets[0]]
    q1 = params.q[contract.assets[0]]
    return contract.scale * (contract.strike * np.exp(-params.r * tau) - x1 * np.exp(-q1 * tau))


def future_value(t, x1, params: MarketParams, strike: float = 80.0, scale: float = 2.0):
    """Value of the benchmark future paying scale*(strike - x1) at the horizon."""
    tau = params.horizon - np.asarray(t, dtype=float)
    if np.any(tau < -_DATE_TOL):
        raise ValueError("valuation time past the horizon")
    out = scale * (strike * np.exp(-params.r * tau) - np.asarray(x1, dtype=float) * np.exp(-params.q[0] * tau))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class PortfolioSpec:
    """The J contracts plus netting/collateral configuration.

    ``union_dates`` is derived as the union of all contract schedules and
    defines the portfolio exercise grid T_1 < ... < T_N (T_0 = 0 excluded).
    Collateral C reduces the netted close-out exposure at default:
    R*(V - C)^+ + (V - C)^- + C.
    """

    contracts: tuple
    netting: bool = False
    collateral: float = 0.0
    union_dates: tuple = field(init=False)

    def __post_init__(self):
        if len(self.contracts) == 0:
            raise ValueError("portfolio needs at least one contract")
        if self.collateral < 0.0:
            raise ValueError("collateral must be >= 0")
        merged: list[float] = []
        for c in self.contracts:
            for t in c.exercise_dates:
                if not any(abs(t - s) <= _DATE_TOL for s in merged):
                    merged.append(t)
        object.__setattr__(self, "union_dates", tuple(sorted(merged)))

    @property
    def n_contracts(self) -> int:
        return len(self.contracts)

    @property
    def maturity(self) -> float:
        return self.union_dates[-1]

    def content_hash(self) -> str:
        payload = {
            "contracts": [c.descriptor() for c in self.contracts],
            "netting": self.netting,
            "collateral": self.collateral,
        }
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]


def payoff_matrix(portfolio: PortfolioSpec, t: float, x: np.ndarray) -> np.ndarray:
    """All immediate payoffs at time t, shape (..., J)."""
    return np.stack([payoff_eval(c, t, x) for c in portfolio.contracts], axis=-1)


def terminal_decisions(portfolio: PortfolioSpec, t: float, g: np.ndarray) -> np.ndarray:
    """Hard-coded maturity rule per contract maturing at t.

    Options exercise iff the payoff is strictly positive; forwards are
    obligations and always settle. Contracts not maturing at t get zeros.
    """
    out = np.zeros_like(g, dtype=bool)
    for j, c in enumerate(portfolio.contracts):
        if abs(t - c.maturity) <= _DATE_TOL:
            out[..., j] = g[..., j] > 0.0 if c.is_option else True
    return out


def active_contracts(portfolio: PortfolioSpec, t: float) -> list[int]:
    """Indices of contracts exercisable at the portfolio date t.

    Rejects dates that are not on the portfolio exercise grid.
    """
    if not any(abs(t - s) <= _DATE_TOL for s in portfolio.union_dates):
        raise ValueError(f"t={t} is not a portfolio exercise date")
    return [j for j, c in enumerate(portfolio.contracts) if c.can_exercise_at(t)]


def closeout_contract(value: np.ndarray, recovery: float) -> np.ndarray:
    """Per-contract close-out at default: R*V^+ + V^-."""
    v = np.asarray(value, dtype=float)
    return recovery * np.maximum(v, 0.0) + np.minimum(v, 0.0)


def closeout_netted(total_value: np.ndarray, recovery: float, collateral: float = 0.0) -> np.ndarray:
    """Netted close-out with collateral: R*(V - C)^+ + (V - C)^- + C."""
    v = np.asarray(total_value, dtype=float) - collateral
    return recovery * np.maximum(v, 0.0) + np.minimum(v, 0.0) + collateral


def alive_flags(stop_times: np.ndarray, t: float, at_date: bool = False) -> np.ndarray:
    """Exercise-state flags 1{not exercised before t}, shape like stop_times.

    With ``at_date=True`` a contract exercising exactly at t still counts as
    alive (exercise happens at t, not prior to it); the default strict
    convention is the one used for exposures, where a contract settling at t
    no longer contributes.
    """
    if at_date:
        return (stop_times >= t - _DATE_TOL).astype(float)
    return (stop_times > t + _DATE_TOL).astype(float)


def _benchmark_dates(n_dates: int = 9, horizon: float = 3.0) -> tuple:
    return tuple(horizon * k / n_dates for k in range(1, n_dates + 1))


def benchmark_option_portfolio() -> PortfolioSpec:
    """The eight at-the-money two-asset options on the quarterly-of-a-year grid."""
    dates = _benchmark_dates()
    kinds = ("max-call", "max-put", "geo-call", "geo-put", "arith-call", "arith-put", "1d-call", "1d-put")
    contracts = tuple(
        ContractSpec(
            contract_id=j + 1,
            kind=kind,
            strike=100.0,
            exercise_dates=dates,
            assets=(0, 1) if not kind.startswith("1d") else (0,),
        )
        for j, kind in enumerate(kinds)
    )
    return PortfolioSpec(contracts=contracts, netting=False, collateral=0.0)


def benchmark_risky_portfolio(collateral: float = 35.0) -> PortfolioSpec:
    """Options plus the short future 2*(80 - x1), which can go negative and
    activates netting; used for the credit-risk experiments."""
    base = benchmark_option_portfolio()
    future = ContractSpec(
        contract_id=9,
        kind="scaled-forward",
        strike=80.0,
        exercise_dates=(base.maturity,),
        assets=(0,),
        scale=2.0,
        margined=True,
    )
    return PortfolioSpec(contracts=base.contracts + (future,), netting=True, collateral=collateral)
