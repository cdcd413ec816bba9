"""Independent pricing references.

Closed-form European prices for one-dimensional and geometric-average payoffs,
binomial-lattice Bermudan prices (a 1-d CRR tree for reducible payoffs and a
two-asset product tree for the rest), and exact Bellman values on tiny
enumerable trees. These never share code with the Monte-Carlo/neural path, so
they can serve as oracles for it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .market import MarketParams
from .portfolio import ContractSpec, payoff_eval

__all__ = [
    "norm_cdf",
    "reduce_to_lognormal",
    "bs_european",
    "lattice_bermudan",
    "lattice_bermudan_2d",
    "TinyTree",
    "exhaustive_stopping",
    "policy_value_on_tree",
    "enumerate_tree_paths",
]

_REDUCIBLE = {"1d-call", "1d-put", "geo-call", "geo-put"}


def norm_cdf(x: float) -> float:
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


def reduce_to_lognormal(kind: str, params: MarketParams) -> tuple[float, float, float, bool]:
    """Map a 1-d or geometric-average payoff to an effective lognormal asset.

    Returns (spot, volatility, dividend yield, is_call). The geometric average
    of correlated lognormals is itself lognormal; matching drift and variance
    gives an effective dividend q_eff = mean(q) + (mean(sigma^2) - sigma_g^2)/2
    with sigma_g^2 = (sigma' rho sigma) / d^2.
    """
    if kind not in _REDUCIBLE:
        raise ValueError(f"payoff kind {kind!r} is not reducible to one dimension")
    is_call = kind.endswith("call")
    if kind.startswith("1d"):
        return float(params.s0[0]), float(params.sigma[0]), float(params.q[0]), is_call
    d = params.d
    var_g = float(params.sigma @ params.rho @ params.sigma) / d**2
    s0_g = float(np.exp(np.log(params.s0).mean()))
    q_g = float(params.q.mean() + 0.5 * (np.mean(params.sigma**2) - var_g))
    return s0_g, math.sqrt(var_g), q_g, is_call


def _black_scholes(s0, strike, r, q, sigma, expiry, is_call) -> float:
    fwd = s0 * math.exp((r - q) * expiry)
    disc = math.exp(-r * expiry)
    if expiry <= 0.0 or sigma <= 0.0:
        intrinsic = fwd - strike if is_call else strike - fwd
        return disc * max(intrinsic, 0.0)
    if strike <= 0.0:
        # degenerate strike: a call is a discounted forward, a put worthless
        return disc * fwd if is_call else 0.0
    vol = sigma * math.sqrt(expiry)
    d1 = (math.log(s0 / strike) + (r - q + 0.5 * sigma**2) * expiry) / vol
    d2 = d1 - vol
    if is_call:
        return s0 * math.exp(-q * expiry) * norm_cdf(d1) - strike * disc * norm_cdf(d2)
    return strike * disc * norm_cdf(-d2) - s0 * math.exp(-q * expiry) * norm_cdf(-d1)


def bs_european(kind: str, params: MarketParams, strike: float, expiry: float) -> float:
    """Closed-form European price of a 1-d-reducible payoff."""
    s0, sigma, q, is_call = reduce_to_lognormal(kind, params)
    return _black_scholes(s0, strike, params.r, q, sigma, expiry, is_call)


def _exercise_steps(exercise_dates, dt: float) -> list[int]:
    steps = []
    for t in exercise_dates:
        k = t / dt
        if abs(k - round(k)) > 1e-8:
            raise ValueError(f"exercise date {t} does not land on a lattice level (dt={dt})")
        steps.append(int(round(k)))
    return steps


def lattice_bermudan(
    kind: str,
    params: MarketParams,
    strike: float,
    exercise_dates,
    steps_per_year: int = 1200,
) -> float:
    """CRR binomial price of a Bermudan option with 1-d-reducible payoff.

    Exercise is allowed only at the listed dates, which must land on lattice
    levels exactly.
    """
    s0, sigma, q, is_call = reduce_to_lognormal(kind, params)
    dates = np.asarray(exercise_dates, dtype=float)
    horizon = float(dates[-1])
    n = int(round(horizon * steps_per_year))
    dt = horizon / n
    ex_steps = set(_exercise_steps(dates, dt))

    u = math.exp(sigma * math.sqrt(dt)) if sigma > 0 else 1.0
    d = 1.0 / u
    growth = math.exp((params.r - q) * dt)
    p = 0.5 if u == d else (growth - d) / (u - d)
    if not 0.0 < p < 1.0:
        raise ValueError("lattice step too coarse for these parameters (p outside (0,1))")
    disc = math.exp(-params.r * dt)

    def intrinsic(k: int) -> np.ndarray:
        prices = s0 * u ** (2 * np.arange(k + 1) - k)
        pay = prices - strike if is_call else strike - prices
        return np.maximum(pay, 0.0)

    values = intrinsic(n)
    for k in range(n - 1, -1, -1):
        values = disc * (p * values[1:] + (1.0 - p) * values[:-1])
        if k in ex_steps:
            values = np.maximum(values, intrinsic(k))
    return float(values[0])


def lattice_bermudan_2d(
    contract: ContractSpec,
    params: MarketParams,
    steps_per_year: int = 200,
) -> float:
    """Product binomial lattice for two-asset Bermudan payoffs (zero correlation)."""
    if params.d != 2:
        raise ValueError("the product lattice is written for d=2")
    if not np.allclose(params.rho, np.eye(2)):
        raise ValueError("the product lattice requires uncorrelated assets")
    dates = np.asarray(contract.exercise_dates, dtype=float)
    horizon = float(dates[-1])
    n = int(round(horizon * steps_per_year))
    dt = horizon / n
    ex_steps = set(_exercise_steps(dates, dt))

    u = np.exp(params.sigma * math.sqrt(dt))
    d = 1.0 / u
    p = (np.exp((params.r - params.q) * dt) - d) / (u - d)
    if np.any(p <= 0.0) or np.any(p >= 1.0):
        raise ValueError("lattice step too coarse for these parameters (p outside (0,1))")
    disc = math.exp(-params.r * dt)

    def intrinsic(k: int) -> np.ndarray:
        lv = 2 * np.arange(k + 1) - k
        s1 = params.s0[0] * u[0] ** lv
        s2 = params.s0[1] * u[1] ** lv
        x = np.empty((k + 1, k + 1, 2))
        x[:, :, 0] = s1[:, None]
        x[:, :, 1] = s2[None, :]
        return payoff_eval(contract, float(k * dt), x)

    values = np.maximum(intrinsic(n), 0.0) if contract.is_option else intrinsic(n)
    for k in range(n - 1, -1, -1):
        values = disc * (
            p[0] * p[1] * values[1:, 1:]
            + p[0] * (1 - p[1]) * values[1:, :-1]
            + (1 - p[0]) * p[1] * values[:-1, 1:]
            + (1 - p[0]) * (1 - p[1]) * values[:-1, :-1]
        )
        if k in ex_steps:
            values = np.maximum(values, intrinsic(k))
    return float(values[0, 0])


@dataclass(frozen=True)
class TinyTree:
    """Small discrete-state tree for exhaustive stopping search.

    ``dates`` are the exercise dates; level 0 is the single root state at
    t = 0 and level k >= 1 holds the states reachable at dates[k-1].
    ``probs[k][i, j]`` is the transition probability from state i at level k
    to state j at level k+1.
    """

    dates: tuple
    root: float
    states: tuple  # tuple of 1-d arrays, one per date
    probs: tuple  # tuple of 2-d arrays, probs[0] has shape (1, len(states[0]))
    rate: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "dates", tuple(float(t) for t in self.dates))
        object.__setattr__(self, "states", tuple(np.asarray(s, dtype=float) for s in self.states))
        object.__setattr__(self, "probs", tuple(np.asarray(p, dtype=float) for p in self.probs))
        if len(self.states) != len(self.dates) or len(self.probs) != len(self.dates):
            raise ValueError("need one state set and one transition matrix per date")
        sizes = [1] + [s.shape[0] for s in self.states]
        for k, p in enumerate(self.probs):
            if p.shape != (sizes[k], sizes[k + 1]):
                raise ValueError(f"transition matrix {k} has shape {p.shape}, expected {(sizes[k], sizes[k + 1])}")
            if not np.allclose(p.sum(axis=1), 1.0, atol=1e-12):
                raise ValueError(f"transition probabilities at level {k} do not sum to 1")

    @property
    def n_levels(self) -> int:
        return len(self.dates)


def exhaustive_stopping(tree: TinyTree, payoff) -> tuple[float, list]:
    """Exact Bellman value and per-node decisions on a TinyTree.

    ``payoff(t, states)`` maps a date and a state array to immediate payoffs.
    Exercise wins only when it strictly beats continuation (ties continue),
    so a payoff that is identically zero yields all-continue decisions.
    """
    times = (0.0, *tree.dates)
    value = np.zeros(1)
    decisions: list[np.ndarray] = []
    for k in range(tree.n_levels, 0, -1):
        g = np.asarray(payoff(times[k], tree.states[k - 1]), dtype=float)
        if k == tree.n_levels:
            cont = np.zeros_like(g)
        else:
            disc = math.exp(-tree.rate * (times[k + 1] - times[k]))
            cont = disc * (tree.probs[k] @ value)
        exercise = g > cont
        value = np.where(exercise, g, cont)
        decisions.append(exercise)
    disc = math.exp(-tree.rate * (times[1] - times[0]))
    root_value = float(disc * (tree.probs[0] @ value)[0])
    decisions.reverse()
    return root_value, decisions


def policy_value_on_tree(tree: TinyTree, payoff, decisions) -> float:
    """Exact value of a fixed decision table on a TinyTree (for optimality checks)."""
    times = (0.0, *tree.dates)
    value = np.zeros(1)
    for k in range(tree.n_levels, 0, -1):
        g = np.asarray(payoff(times[k], tree.states[k - 1]), dtype=float)
        if k == tree.n_levels:
            cont = np.zeros_like(g)
        else:
            disc = math.exp(-tree.rate * (times[k + 1] - times[k]))
            cont = disc * (tree.probs[k] @ value)
        value = np.where(np.asarray(decisions[k - 1], dtype=bool), g, cont)
    disc = math.exp(-tree.rate * (times[1] - times[0]))
    return float(disc * (tree.probs[0] @ value)[0])


def enumerate_tree_paths(tree: TinyTree) -> tuple[np.ndarray, np.ndarray]:
    """All root-to-leaf state paths with their probabilities.

    Returns (paths, probabilities) with paths of shape (P, n_levels + 1)
    starting at the root state. With dyadic transition probabilities this lets
    exact expectations be computed as plain means over duplicated paths.
    """
    paths = [[tree.root]]
    weights = [1.0]
    indices = [[0]]
    for k in range(tree.n_levels):
        new_paths, new_weights, new_indices = [], [], []
        for path, w, idx in zip(paths, weights, indices):
            i = idx[-1]
            for j, pij in enumerate(tree.probs[k][i]):
                if pij > 0.0:
                    new_paths.append(path + [float(tree.states[k][j])])
                    new_weights.append(w * float(pij))
                    new_indices.append(idx + [j])
        paths, weights, indices = new_paths, new_weights, new_indices
    return np.asarray(paths), np.asarray(weights)
