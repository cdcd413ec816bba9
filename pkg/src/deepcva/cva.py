"""Credit valuation adjustment: time-0 figures, dynamic distributions, risk
measures and the expected-exposure integral approximation.

CVA is the risk-free portfolio value minus the risky one; computing the risky
value with the risk-free exercise strategy instead of the risky-optimal one
gives the (upward-biased) bar variants. Dynamic CVA samples live on surviving
paths only.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field, asdict

import numpy as np

from .market import DefaultParams, PathBatch
from .policy import StoppingResult
from .valuation import ExposureProfile, ValueSurface, empirical_percentile

__all__ = [
    "cva_time_zero",
    "relative_overestimation",
    "DynamicCvaSample",
    "dynamic_cva",
    "RiskMeasures",
    "risk_measures",
    "risk_measure_curves",
    "analytic_default_probs",
    "cva_from_ee",
    "CvaCell",
    "CvaReport",
]


def cva_time_zero(
    v_free: float,
    v_risky: float,
    se_free: float = 0.0,
    se_risky: float = 0.0,
) -> tuple[float, float]:
    """CVA as the difference of the two value estimates, with propagated s.e.

    The estimates should come from the same evaluation paths (common random
    numbers); the quadrature-free propagated error sqrt(se1^2 + se2^2) is then
    conservative.
    """
    return v_free - v_risky, float(np.hypot(se_free, se_risky))


def relative_overestimation(cva: float, cva_bar: float) -> float:
    """(CVA-bar - CVA) / CVA, or 0 when both vanish."""
    if cva == 0.0:
        return 0.0
    return (cva_bar - cva) / cva


@dataclass
class DynamicCvaSample:
    """Pathwise CVA values over the monitoring grid, defined on survivors.

    ``values[m, k]`` is meaningful only where ``surviving[m, k]`` holds; the
    t=0 column, when anchored, is the degenerate (deterministic) distribution
    at the static CVA estimate.
    """

    times: np.ndarray
    values: np.ndarray
    surviving: np.ndarray

    def at(self, k: int) -> np.ndarray:
        return self.values[self.surviving[:, k], k]


def dynamic_cva(
    v_surface: ValueSurface,
    risky_surface: ValueSurface,
    batch: PathBatch,
    result: StoppingResult,
    netted: bool = False,
    anchor: float | None = None,
) -> DynamicCvaSample:
    """Pathwise difference of regressed risk-free and risky values.

    The exercise-state flags come from the supplied strategy roll. Without
    netting both surfaces are per-contract (IR) and the difference is summed
    over alive contracts; with netting the risky side is the scalar portfolio
    regression on (state, flags). At t=0 the distribution is degenerate, so
    the column is filled with the caller's static estimate when given.
    """
    if netted and risky_surface.mode != "pr":
        raise ValueError("netted dynamic CVA needs a portfolio-regression risky surface")
    if not netted and risky_surface.mode != "ir":
        raise ValueError("un-netted dynamic CVA needs an individual-regression risky surface")
    times = v_surface.grid_times
    m = batch.n_paths
    values = np.zeros((m, times.shape[0]))
    surviving = batch.default_time[:, None] > times[None, :]
    if anchor is not None:
        values[:, 0] = anchor
    for k in range(1, times.shape[0]):
        rows = surviving[:, k]
        if not rows.any():
            continue
        t = times[k]
        x = batch.states[rows, k, :]
        alpha = result.alive_flags_at(t)[rows]
        v_free = v_surface.values_at(x, k)
        if netted:
            free_leg = np.sum(v_free * alpha, axis=1)
            risky_leg = risky_surface.values_at(x, k, alpha=alpha)
        else:
            diff = v_free - risky_surface.values_at(x, k)
            values[rows, k] = np.sum(diff * alpha, axis=1)
            continue
        values[rows, k] = free_leg - risky_leg
    return DynamicCvaSample(times.copy(), values, surviving)


@dataclass
class RiskMeasures:
    expected: float
    var: float
    es: float
    n_sample: int
    tail_count: int
    warned: bool = False


def risk_measures(sample: np.ndarray, level: float) -> RiskMeasures:
    """Conditional mean, nearest-rank VaR and tail-conditional ES of a sample.

    The ES tail is the closed upper set {value >= VaR}. When the sample is too
    small to resolve the alpha tail the values are still reported but flagged
    with a warning.
    """
    sample = np.asarray(sample, dtype=float)
    if sample.size == 0:
        raise ValueError("risk measures need a nonempty sample")
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie strictly inside (0, 1)")
    var = empirical_percentile(sample, level)
    tail = sample[sample >= var]
    warned = False
    if sample.size * (1.0 - level) < 1.0:
        warnings.warn(
            f"sample of size {sample.size} cannot resolve the {level:.3f} tail; "
            "reported VaR/ES fall back to the sample maximum region",
            RuntimeWarning,
            stacklevel=2,
        )
        warned = True
    return RiskMeasures(
        expected=float(sample.mean()),
        var=float(var),
        es=float(tail.mean()),
        n_sample=int(sample.size),
        tail_count=int(tail.size),
        warned=warned,
    )


def risk_measure_curves(sample: DynamicCvaSample, level: float):
    """E-CVA, VaR-CVA and ES-CVA curves over the grid, on survivors.

    ``es_se`` is the naive tail-sample standard error of the ES estimate
    (tail standard deviation over sqrt(tail count)).
    """
    n_times = sample.times.shape[0]
    e = np.full(n_times, np.nan)
    var = np.full(n_times, np.nan)
    es = np.full(n_times, np.nan)
    es_se = np.full(n_times, np.nan)
    n_surv = np.zeros(n_times, dtype=int)
    for k in range(n_times):
        vals = sample.at(k)
        n_surv[k] = vals.size
        if vals.size == 0:
            continue
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            rm = risk_measures(vals, level)
        e[k], var[k], es[k] = rm.expected, rm.var, rm.es
        tail = vals[vals >= rm.var]
        es_se[k] = tail.std(ddof=1) / np.sqrt(tail.size) if tail.size > 1 else 0.0
    return sample.times, e, var, es, es_se, n_surv


def analytic_default_probs(dp: DefaultParams, times: np.ndarray) -> np.ndarray:
    """Per-interval default probabilities e^{-h t_{m-1}} - e^{-h t_m} (b = 0 only)."""
    if dp.b != 0.0:
        raise ValueError("analytic default probabilities require b = 0 (independence)")
    surv = np.exp(-dp.h_bar * np.asarray(times, dtype=float))
    return -np.diff(surv)


def cva_from_ee(ee_curve: ExposureProfile, dp: DefaultParams, default_probs: np.ndarray | None = None) -> float:
    """EE-integral CVA approximation (1-R) * sum EE(t_m) * Q(default in (t_{m-1}, t_m]).

    Valid only when the default event is independent of the market (b = 0);
    the exposure curve is already discounted to time 0.
    """
    if dp.b != 0.0:
        raise ValueError("the EE-integral approximation assumes independence (b = 0)")
    if default_probs is None:
        default_probs = analytic_default_probs(dp, ee_curve.times)
    default_probs = np.asarray(default_probs, dtype=float)
    if default_probs.shape[0] != ee_curve.times.shape[0] - 1:
        raise ValueError("need one default probability per grid interval")
    return float((1.0 - dp.recovery) * np.sum(ee_curve.ee[1:] * default_probs))


@dataclass
class CvaCell:
    """All portfolio values and CVA figures for one (b, h_bar) grid cell."""

    b: float
    h_bar: float
    upsilon_v: float
    upsilon_u_star: float
    upsilon_u_bar: float
    upsilon_a_star: float
    upsilon_a_bar: float
    se_v: float = 0.0
    se_u_star: float = 0.0
    se_u_bar: float = 0.0
    se_a_star: float = 0.0
    se_a_bar: float = 0.0
    deterministic: bool = False

    @property
    def cva(self) -> float:
        return self.upsilon_v - self.upsilon_u_star

    @property
    def cva_bar(self) -> float:
        return self.upsilon_v - self.upsilon_u_bar

    @property
    def cva_net(self) -> float:
        return self.upsilon_v - self.upsilon_a_star

    @property
    def cva_bar_net(self) -> float:
        return self.upsilon_v - self.upsilon_a_bar

    @property
    def rel_overestimation(self) -> float:
        return relative_overestimation(self.cva, self.cva_bar)

    @property
    def rel_overestimation_net(self) -> float:
        return relative_overestimation(self.cva_net, self.cva_bar_net)

    def se_cva(self, which: str = "cva") -> float:
        pair = {
            "cva": self.se_u_star,
            "cva_bar": self.se_u_bar,
            "cva_net": self.se_a_star,
            "cva_bar_net": self.se_a_bar,
        }[which]
        return float(np.hypot(self.se_v, pair))


@dataclass
class CvaReport:
    """Grid of CVA cells plus curve data and reproducibility metadata."""

    cells: list = field(default_factory=list)
    curves: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def cell(self, b: float, h_bar: float) -> CvaCell:
        for c in self.cells:
            if c.b == b and c.h_bar == h_bar:
                return c
        raise KeyError(f"no cell for (b={b}, h_bar={h_bar})")

    def to_dict(self) -> dict:
        return {
            "cells": [asdict(c) for c in self.cells],
            "curves": {
                k: {kk: np.asarray(vv, dtype=float).tolist() for kk, vv in v.items()}
                for k, v in self.curves.items()
            },
            "metadata": self.metadata,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "CvaReport":
        data = json.loads(text)
        report = cls(metadata=data["metadata"])
        for c in data["cells"]:
            report.cells.append(CvaCell(**c))
        report.curves = {
            k: {kk: np.asarray(vv, dtype=float) for kk, vv in v.items()} for k, v in data["curves"].items()
        }
        return report

    def __eq__(self, other) -> bool:
        if not isinstance(other, CvaReport):
            return NotImplemented
        if self.metadata != other.metadata or [asdict(c) for c in self.cells] != [asdict(c) for c in other.cells]:
            return False
        if set(self.curves) != set(other.curves):
            return False
        for k, v in self.curves.items():
            if set(v) != set(other.curves[k]):
                return False
            for kk in v:
                if not np.array_equal(np.asarray(v[kk]), np.asarray(other.curves[k][kk])):
                    return False
        return True
