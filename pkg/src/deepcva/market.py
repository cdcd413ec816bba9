"""Market and default-risk simulation.

Correlated multi-asset geometric Brownian motion sampled exactly at the grid
times (lognormal increments), a one-dimensional aggregated Brownian motion
driving the default intensity, wrong-way-risk default times via first passage
of the integrated intensity over an Exp(1) trigger, and constant-rate
discounting.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "MarketParams",
    "DefaultParams",
    "TimeGrid",
    "PathBatch",
    "make_grid",
    "simulate_paths",
    "intensity_path",
    "sample_defaults",
    "discount",
    "sigma_tilde",
    "save_batch",
    "load_batch",
]

_BATCH_FORMAT_VERSION = 1


@dataclass(frozen=True)
class MarketParams:
    """Risk-neutral Black-Scholes world for ``d`` assets.

    Units: prices in currency, rates/dividends per year, volatilities per
    sqrt(year), horizon in years. ``rho`` is the instantaneous correlation of
    the driving Brownian motions.
    """

    s0: np.ndarray
    r: float
    q: np.ndarray
    sigma: np.ndarray
    rho: np.ndarray
    horizon: float

    def __post_init__(self):
        object.__setattr__(self, "s0", np.atleast_1d(np.asarray(self.s0, dtype=float)))
        d = self.s0.shape[0]
        object.__setattr__(self, "q", np.broadcast_to(np.asarray(self.q, dtype=float), (d,)).copy())
        object.__setattr__(self, "sigma", np.broadcast_to(np.asarray(self.sigma, dtype=float), (d,)).copy())
        object.__setattr__(self, "rho", np.asarray(self.rho, dtype=float).reshape(d, d))
        if np.any(self.s0 <= 0.0):
            raise ValueError("initial prices must be strictly positive")
        if np.any(self.sigma < 0.0):
            raise ValueError("volatilities must be non-negative")
        if self.horizon <= 0.0:
            raise ValueError("horizon must be positive")
        if not np.allclose(self.rho, self.rho.T, atol=1e-12):
            raise ValueError("correlation matrix must be symmetric")
        if not np.allclose(np.diag(self.rho), 1.0, atol=1e-12):
            raise ValueError("correlation matrix must have unit diagonal")

    @property
    def d(self) -> int:
        return self.s0.shape[0]


@dataclass(frozen=True)
class DefaultParams:
    """Counterparty default model: h(t) = h_bar + 0.5*st^2*t^2*b^2 + b*st*W~_t.

    ``h_bar`` is the credit spread (1/year), ``b`` the wrong-way-risk coupling
    (b > 0 ties defaults to rising asset levels), ``recovery`` the fraction of
    positive close-out value recovered at default, ``monitor_steps`` the number
    of default-monitoring sub-steps per exercise interval.
    """

    h_bar: float
    b: float
    recovery: float = 0.0
    monitor_steps: int = 4

    def __post_init__(self):
        if not 0.0 <= self.recovery < 1.0:
            raise ValueError("recovery must lie in [0, 1)")
        if self.monitor_steps < 1:
            raise ValueError("monitor_steps must be >= 1")


@dataclass(frozen=True)
class TimeGrid:
    """Monitoring grid 0 = t_0 < t_1 < ... < t_K with marked exercise dates.

    ``exercise_idx[n-1]`` is the index of the n-th exercise date T_n; t_0 = 0
    is never an exercise date.
    """

    times: np.ndarray
    exercise_idx: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "times", np.asarray(self.times, dtype=float))
        object.__setattr__(self, "exercise_idx", np.asarray(self.exercise_idx, dtype=int))
        if self.times[0] != 0.0 or np.any(np.diff(self.times) <= 0.0):
            raise ValueError("grid must be strictly increasing and start at 0")
        if self.exercise_idx.size == 0 or self.exercise_idx[0] == 0:
            raise ValueError("need at least one exercise date and t=0 is not one")

    @property
    def n_dates(self) -> int:
        return self.exercise_idx.shape[0]

    @property
    def exercise_times(self) -> np.ndarray:
        return self.times[self.exercise_idx]

    def date_interval_of(self, grid_idx: np.ndarray) -> np.ndarray:
        """Exercise interval containing each grid index: smallest n with t <= T_n (1-based)."""
        return np.searchsorted(self.exercise_idx, grid_idx, side="left") + 1


def make_grid(exercise_dates, monitor_steps: int = 1) -> TimeGrid:
    """Build the monitoring grid by subdividing each exercise interval."""
    dates = np.asarray(exercise_dates, dtype=float)
    if dates.size == 0 or dates[0] <= 0.0 or np.any(np.diff(dates) <= 0.0):
        raise ValueError("exercise dates must be strictly increasing and > 0")
    if monitor_steps < 1:
        raise ValueError("monitor_steps must be >= 1")
    times = [np.array([0.0])]
    idx = []
    prev = 0.0
    pos = 0
    for t in dates:
        sub = prev + (t - prev) * np.arange(1, monitor_steps + 1) / monitor_steps
        sub[-1] = t
        times.append(sub)
        pos += monitor_steps
        idx.append(pos)
        prev = t
    return TimeGrid(np.concatenate(times), np.array(idx))


@dataclass
class PathBatch:
    """Simulated market paths on the monitoring grid, with optional defaults.

    ``states`` has shape (n_paths, K+1, d); ``brownian_tilde`` is the
    aggregated Brownian motion W~ on the same grid; ``default_idx`` is the grid
    index of the default time (-1 and default_time = +inf when the path never
    defaults). Immutable by convention once built.
    """

    params: MarketParams
    grid: TimeGrid
    states: np.ndarray
    brownian_tilde: np.ndarray
    default_time: np.ndarray = field(default=None)
    default_idx: np.ndarray = field(default=None)
    seed: int = 0

    def __post_init__(self):
        m = self.states.shape[0]
        if self.default_time is None:
            self.default_time = np.full(m, np.inf)
        if self.default_idx is None:
            self.default_idx = np.full(m, -1, dtype=int)

    @property
    def n_paths(self) -> int:
        return self.states.shape[0]

    def states_at_dates(self) -> np.ndarray:
        """States restricted to the exercise dates, shape (n_paths, N, d)."""
        return self.states[:, self.grid.exercise_idx, :]

    def alive_at(self, t: float) -> np.ndarray:
        """Survival indicator 1{t < default_time} per path."""
        return t < self.default_time


def _correlation_factor(rho: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(rho)
    except np.linalg.LinAlgError:
        eigvals, eigvecs = np.linalg.eigh(rho)
        if eigvals.min() < -1e-10:
            raise ValueError(
                f"correlation matrix not positive semi-definite (min eigenvalue {eigvals.min():.3e})"
            ) from None
        return eigvecs * np.sqrt(np.clip(eigvals, 0.0, None))


def sigma_tilde(params: MarketParams) -> float:
    """Volatility of the geometric-average aggregate: (1/d) * sqrt(sum sigma_i^2)."""
    return float(np.sqrt(np.sum(params.sigma**2)) / params.d)


def simulate_paths(params: MarketParams, grid: TimeGrid, n_paths: int, seed) -> PathBatch:
    """Sample GBM paths exactly at the grid times.

    Increments are exact lognormal draws, so the only error is Monte-Carlo.
    Identical (params, grid, n_paths, seed) reproduces the batch bit for bit,
    and the first m paths of a larger batch equal the m-path batch.
    """
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    factor = _correlation_factor(params.rho)
    rng = np.random.default_rng(seed)
    times = grid.times
    dt = np.diff(times)
    m, k, d = n_paths, dt.shape[0], params.d

    z = rng.standard_normal((m, k, d))
    dw = (z @ factor.T) * np.sqrt(dt)[None, :, None]
    w = np.zeros((m, k + 1, d))
    np.cumsum(dw, axis=1, out=w[:, 1:, :])

    drift = (params.r - params.q - 0.5 * params.sigma**2)[None, None, :] * times[None, :, None]
    states = params.s0[None, None, :] * np.exp(drift + params.sigma[None, None, :] * w)

    st = sigma_tilde(params)
    if st > 0.0:
        w_tilde = (w @ params.sigma) / (params.d * st)
    else:
        w_tilde = np.zeros((m, k + 1))

    seed_record = int(seed) if isinstance(seed, (int, np.integer)) else 0
    return PathBatch(params, grid, states, w_tilde, seed=seed_record)


def intensity_path(batch: PathBatch, dp: DefaultParams) -> np.ndarray:
    """Default intensity h(t) on the monitoring grid, shape (n_paths, K+1).

    Negative values are permitted for b != 0; only the first passage of the
    integrated intensity matters, so survival probabilities stay valid.
    """
    st = sigma_tilde(batch.params)
    t = batch.grid.times[None, :]
    return dp.h_bar + 0.5 * (st * t * dp.b) ** 2 + dp.b * st * batch.brownian_tilde


def sample_defaults(batch: PathBatch, dp: DefaultParams, seed) -> PathBatch:
    """Draw default times by first passage of the integrated intensity.

    Per path, the trapezoidal cumulative integral of h over the monitoring
    grid is compared against an independent Exp(1) trigger E = -log U; the
    default time is the first grid point where the integral reaches E.
    """
    h = intensity_path(batch, dp)
    dt = np.diff(batch.grid.times)
    increments = 0.5 * (h[:, :-1] + h[:, 1:]) * dt[None, :]
    cumulative = np.zeros_like(h)
    np.cumsum(increments, axis=1, out=cumulative[:, 1:])

    rng = np.random.default_rng(seed)
    u = rng.random(batch.n_paths)
    u[u == 0.0] = np.finfo(float).tiny  # keep the trigger strictly positive
    trigger = -np.log(u)

    hit = cumulative >= trigger[:, None]
    defaulted = hit.any(axis=1)
    idx = hit.argmax(axis=1)
    default_idx = np.where(defaulted, idx, -1)
    default_time = np.where(defaulted, batch.grid.times[idx], np.inf)
    return PathBatch(
        batch.params,
        batch.grid,
        batch.states,
        batch.brownian_tilde,
        default_time=default_time,
        default_idx=default_idx,
        seed=batch.seed,
    )


def discount(r: float, t: float, u) -> np.ndarray | float:
    """Discount factor D_{t,u} = exp(-r (u - t)) for a constant short rate."""
    u = np.asarray(u, dtype=float)
    if np.any(u < t):
        raise ValueError("discounting requires t <= u")
    out = np.exp(-r * (u - t))
    return float(out) if out.ndim == 0 else out


def save_batch(path, batch: PathBatch) -> None:
    """Versioned binary dump of a PathBatch (for experiment reproducibility)."""
    p = batch.params
    np.savez_compressed(
        path,
        format_version=_BATCH_FORMAT_VERSION,
        d=p.d,
        n_grid=batch.grid.times.shape[0],
        n_paths=batch.n_paths,
        seed=batch.seed,
        s0=p.s0,
        r=p.r,
        q=p.q,
        sigma=p.sigma,
        rho=p.rho,
        horizon=p.horizon,
        times=batch.grid.times,
        exercise_idx=batch.grid.exercise_idx,
        states=batch.states,
        brownian_tilde=batch.brownian_tilde,
        default_time=batch.default_time,
        default_idx=batch.default_idx,
    )


def load_batch(path) -> PathBatch:
    with np.load(path) as data:
        version = int(data["format_version"])
        if version != _BATCH_FORMAT_VERSION:
            raise ValueError(f"unsupported batch format version {version}")
        params = MarketParams(
            s0=data["s0"],
            r=float(data["r"]),
            q=data["q"],
            sigma=data["sigma"],
            rho=data["rho"],
            horizon=float(data["horizon"]),
        )
        grid = TimeGrid(data["times"], data["exercise_idx"])
        return PathBatch(
            params,
            grid,
            data["states"],
            data["brownian_tilde"],
            default_time=data["default_time"],
            default_idx=data["default_idx"],
            seed=int(data["seed"]),
        )
