"""Neural regression of pathwise values and exposure profiles.

Freezing a trained exercise policy turns pathwise discounted cash flows into
regression targets whose conditional expectation is the (risk-free or risky)
value function. One regression network is fitted per exercise date; values at
interior monitoring times are read off the owning date's network with an
explicit discount adjustment. Individual regression (IR) fits a vector of
per-contract values; portfolio regression (PR) fits the scalar exercise-state
weighted portfolio value on (state, flags) inputs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .market import PathBatch
from .portfolio import PortfolioSpec
from .policy import DecisionPolicy, StoppingResult, evaluate_stopping, roll_policy
from .seeds import SeedBank

__all__ = [
    "ValueSurface",
    "CashFlowTargets",
    "ExposureProfile",
    "build_targets",
    "build_risky_targets",
    "build_netted_targets",
    "fit_ir",
    "fit_pr",
    "exposure_profile",
    "empirical_percentile",
    "save_surface",
    "load_surface",
]

_SURFACE_FORMAT_VERSION = 1


def empirical_percentile(values: np.ndarray, level: float) -> float:
    """Nearest-rank empirical percentile: the ceil(level*n)-th order statistic."""
    if not 0.0 < level < 1.0:
        raise ValueError("percentile level must lie strictly inside (0, 1)")
    v = np.sort(np.asarray(values))
    idx = max(int(np.ceil(level * v.shape[0])) - 1, 0)
    return float(v[idx])


@dataclass
class ValueSurface:
    """Regression networks for pathwise values over the monitoring grid.

    ``mode`` is "ir" (vector of per-contract values, state input) or "pr"
    (scalar exercise-state-weighted portfolio value, state+flags input).

    With ``per_monitor`` the surface holds one network per monitoring time,
    keyed by grid index, and queries evaluate the exact-time network. In the
    coarser per-date layout the network of date n values the whole interval
    (T_{n-1}, T_n]: a query at an interior time t evaluates the net at the
    forward-propagated state x * exp((r - q)(T_n - t)) and discounts by
    exp(-r (T_n - t)) — exact for value functions affine in the assets and
    drift-corrected otherwise, but it underestimates convex out-of-the-money
    values between dates, which is why close-out surfaces use per_monitor.
    """

    mode: str
    grid_times: np.ndarray
    exercise_idx: np.ndarray
    r: float
    q: np.ndarray
    nets: dict = field(default_factory=dict)
    portfolio_hash: str = ""
    per_monitor: bool = False

    def _interval_of(self, grid_idx: int) -> int:
        return int(np.searchsorted(self.exercise_idx, grid_idx, side="left")) + 1

    def values_at(self, x: np.ndarray, grid_idx: int, alpha: np.ndarray | None = None) -> np.ndarray:
        """Values at monitoring time times[grid_idx] for states x.

        IR mode returns (m, J); PR mode returns (m,) and requires the
        exercise-state flags.
        """
        if self.per_monitor:
            net = self.nets.get(int(grid_idx))
            if net is None:
                raise ValueError(f"no regression network at grid index {grid_idx}")
            adj = 1.0
        else:
            n = self._interval_of(grid_idx)
            net = self.nets.get(n)
            if net is None:
                raise ValueError(f"no regression network for exercise interval {n}")
            t = self.grid_times[grid_idx]
            t_n = self.grid_times[self.exercise_idx[n - 1]]
            adj = float(np.exp(-self.r * (t_n - t)))
            if t_n > t:
                x = x * np.exp((self.r - self.q) * (t_n - t))[None, :]
        if self.mode == "pr":
            if alpha is None:
                raise ValueError("portfolio-regression surface needs exercise-state flags")
            out = net(np.concatenate([x, alpha], axis=1))[:, 0]
        else:
            out = net(x)
        return adj * out


@dataclass
class CashFlowTargets:
    """Discounted future cash flows under a frozen policy, per target time.

    ``y[i]`` holds the time-t_i value of the flows from t_i onwards per
    contract (a contract's flow counts while its stopping time is >= t_i);
    ``alpha[i]`` are the flags for contracts not exercised before t_i;
    ``netted_extra[i]``, when present, is the scalar netted close-out leg.
    ``grid_idx`` locates each target time on the monitoring grid — the
    exercise dates only, or every monitoring time. Sample second moments are
    kept as a square-integrability guard.
    """

    times: np.ndarray
    grid_idx: np.ndarray
    y: list
    alpha: list
    netted_extra: list | None = None
    second_moments: np.ndarray | None = None

    def __post_init__(self):
        if self.second_moments is None:
            self.second_moments = np.stack([np.mean(yn**2, axis=0) for yn in self.y])
        if not np.all(np.isfinite(self.second_moments)):
            raise ValueError("cash-flow targets have non-finite second moments")


def _masked_contract_flows(result: StoppingResult, ts: np.ndarray):
    """Exercise legs of one realised roll, discounted to each target time.

    A contract's leg counts while its stopping time is >= t (exercise at t
    settles at t); the flags record which contracts are still unexercised.
    """
    r = result.r
    tau = result.stop_times
    amounts = result.amounts
    y, alpha = [], []
    for t in ts:
        live = tau >= t - 1e-9
        disc = np.where(live & np.isfinite(tau), np.exp(-r * (np.where(np.isfinite(tau), tau, t) - t)), 0.0)
        y.append(amounts * disc * live)
        alpha.append(live.astype(float))
    return y, alpha


def _target_times(batch: PathBatch, times: str):
    if times == "dates":
        return batch.grid.exercise_times, batch.grid.exercise_idx.copy()
    if times == "monitor":
        return batch.grid.times[1:], np.arange(1, batch.grid.times.shape[0])
    raise ValueError("times must be 'dates' or 'monitor'")


def _live_contract_targets(
    policy: DecisionPolicy,
    batch: PathBatch,
    portfolio: PortfolioSpec,
    ts: np.ndarray,
    gi: np.ndarray,
    dp=None,
    surface=None,
):
    """Per-contract live-value targets by restarting the stopping rule per date.

    The value of contract j at time t is the value of a still-alive contract,
    so the target flow re-applies the decision rule from the next exercise
    date with every contract alive, regardless of earlier exercises on the
    path (exercise history enters separately, as flags). Risky targets
    (dp given) add the per-contract close-out leg on defaulted paths.
    """
    grid = batch.grid
    m = batch.n_paths
    n_contracts = portfolio.n_contracts
    date_of = grid.date_interval_of(gi)
    y = [np.zeros((m, n_contracts)) for _ in ts]
    risky = dp is not None
    for n in sorted(set(int(v) for v in date_of)):
        rolled = roll_policy(
            policy,
            batch,
            portfolio,
            dp=dp,
            surface=surface,
            start_n=n,
            alive0=np.ones((m, n_contracts), dtype=bool),
        )
        tau = rolled.stop_times
        finite = np.isfinite(tau)
        co0 = rolled.closeout_flows_contract() if risky else None
        for i in np.nonzero(date_of == n)[0]:
            t = ts[i]
            disc = np.where(finite, np.exp(-rolled.r * (np.where(finite, tau, t) - t)), 0.0)
            yi = rolled.amounts * disc
            if risky:
                after = batch.default_time > t
                yi = yi + co0 * np.exp(rolled.r * t) * after[:, None]
            y[i] = yi
    return y


def build_targets(
    policy: DecisionPolicy,
    batch: PathBatch,
    portfolio: PortfolioSpec,
    times: str = "dates",
) -> CashFlowTargets:
    """Risk-free regression targets under a frozen policy.

    Per-contract targets are live-contract values (stopping restarted per
    date); the flags describing the realised exercise history come from the
    roll from the first date.
    """
    result = evaluate_stopping(policy, batch, portfolio)
    ts, gi = _target_times(batch, times)
    _, alpha = _masked_contract_flows(result, ts)
    y = _live_contract_targets(policy, batch, portfolio, ts, gi)
    return CashFlowTargets(ts, gi, y, alpha)


def build_risky_targets(
    policy: DecisionPolicy,
    batch: PathBatch,
    portfolio: PortfolioSpec,
    dp,
    surface,
    times: str = "dates",
) -> CashFlowTargets:
    """Per-contract risky targets: live-value exercise legs plus per-contract
    close-out legs on defaulted paths. Only paths surviving past each target
    time are meaningful; the fitting step masks the rest."""
    result = evaluate_stopping(policy, batch, portfolio, dp=dp, surface=surface)
    ts, gi = _target_times(batch, times)
    _, alpha = _masked_contract_flows(result, ts)
    y = _live_contract_targets(policy, batch, portfolio, ts, gi, dp=dp, surface=surface)
    return CashFlowTargets(ts, gi, y, alpha)


def build_netted_targets(
    result: StoppingResult,
    batch: PathBatch,
    collateral: float,
    times: str = "dates",
) -> CashFlowTargets:
    """Scalar netted risky targets from one realised roll.

    The flag-weighted sum of the roll's exercise legs plus the netted
    close-out leg is exactly the quantity the portfolio regression conditions
    on (state, flags), so no restart is needed here.
    """
    ts, gi = _target_times(batch, times)
    y, alpha = _masked_contract_flows(result, ts)
    co0 = result.closeout_flow_netted(collateral)
    r = result.r
    extra = []
    for t in ts:
        after = batch.default_time > t
        extra.append(co0 * np.exp(r * t) * after)
    return CashFlowTargets(ts, gi, y, alpha, netted_extra=extra)


def _fit_net_for_date(
    inputs: np.ndarray,
    targets: np.ndarray,
    hidden,
    schedule: nn.TrainSchedule,
    bank: SeedBank,
    label,
    hidden_activation: str = "relu",
    warm: nn.TrainedNet | None = None,
) -> nn.TrainedNet:
    """Least-squares fit with standardised inputs and targets.

    Regression nets default to relu hidden layers: value functions grow
    linearly in the assets and saturating activations cannot extrapolate into
    the lognormal tail (the scaled-forward fit degrades by several currency
    units there with tanh). A warm net (the neighbouring time's fit) seeds the
    parameters and freezes its scalers so the copied weights stay calibrated.
    """
    targets = targets if targets.ndim == 2 else targets[:, None]
    cfg = nn.NetworkConfig(
        input_dim=inputs.shape[1],
        hidden=tuple(hidden),
        output_dim=targets.shape[1],
        hidden_activation=hidden_activation,
        output_activation="identity",
    )
    if warm is not None and warm.cfg == cfg:
        scaler = warm.x_scaler
        y_mean = np.asarray(warm.y_mean, dtype=float)
        y_scale = np.asarray(warm.y_scale, dtype=float)
        params = warm.params.copy()
    else:
        scaler = nn.InputScaler.fit(inputs)
        y_mean = targets.mean(axis=0)
        y_scale = np.where(targets.std(axis=0) < 1e-12, 1.0, targets.std(axis=0))
        params = nn.init_params(cfg, bank.generator("init", *label))
    y_std = (targets - y_mean) / y_scale
    scaled = scaler.apply(inputs)

    def loss_grad(rows, out):
        resid = out - y_std[rows]
        loss = float(np.mean(np.sum(resid**2, axis=1)))
        return loss, 2.0 * resid / rows.shape[0]

    try:
        nn.train_network(params, cfg, scaled, loss_grad, schedule, bank.generator("shuffle", *label))
    except FloatingPointError as exc:
        raise ValueError(f"regression fit aborted at {label}: {exc}") from exc
    return nn.TrainedNet(cfg, params, scaler, y_mean=y_mean, y_scale=y_scale)


def _is_per_monitor(targets: CashFlowTargets, batch: PathBatch) -> bool:
    return targets.grid_idx.shape[0] != batch.grid.exercise_idx.shape[0] or not np.array_equal(
        targets.grid_idx, batch.grid.exercise_idx
    )


def fit_ir(
    targets: CashFlowTargets,
    batch: PathBatch,
    schedule: nn.TrainSchedule,
    seed,
    hidden=(30, 30, 30),
    portfolio_hash: str = "",
    survivors_only: bool = False,
    hidden_activation: str = "relu",
) -> ValueSurface:
    """Vector regression of per-contract values on the market state."""
    bank = seed if isinstance(seed, SeedBank) else SeedBank(seed)
    grid = batch.grid
    per_monitor = _is_per_monitor(targets, batch)
    surface = ValueSurface(
        "ir",
        grid.times,
        grid.exercise_idx,
        batch.params.r,
        batch.params.q,
        portfolio_hash=portfolio_hash,
        per_monitor=per_monitor,
    )
    prev = None
    for i in range(targets.times.shape[0] - 1, -1, -1):
        t, gi = targets.times[i], targets.grid_idx[i]
        x = batch.states[:, gi, :]
        y = targets.y[i]
        if survivors_only:
            keep = batch.default_time > t
            x, y = x[keep], y[keep]
        key = int(gi) if per_monitor else i + 1
        prev = _fit_net_for_date(x, y, hidden, schedule, bank, ("ir", key), hidden_activation, warm=prev)
        surface.nets[key] = prev
    return surface


def fit_pr(
    targets: CashFlowTargets,
    batch: PathBatch,
    schedule: nn.TrainSchedule,
    seed,
    hidden=(30, 30, 30),
    portfolio_hash: str = "",
    survivors_only: bool = False,
    hidden_activation: str = "relu",
) -> ValueSurface:
    """Scalar regression of the flag-weighted portfolio value on (state, flags)."""
    bank = seed if isinstance(seed, SeedBank) else SeedBank(seed)
    grid = batch.grid
    per_monitor = _is_per_monitor(targets, batch)
    surface = ValueSurface(
        "pr",
        grid.times,
        grid.exercise_idx,
        batch.params.r,
        batch.params.q,
        portfolio_hash=portfolio_hash,
        per_monitor=per_monitor,
    )
    prev = None
    for i in range(targets.times.shape[0] - 1, -1, -1):
        t, gi = targets.times[i], targets.grid_idx[i]
        x = batch.states[:, gi, :]
        alpha = targets.alpha[i]
        y = np.sum(targets.y[i] * alpha, axis=1)
        if targets.netted_extra is not None:
            y = y + targets.netted_extra[i]
        inputs = np.concatenate([x, alpha], axis=1)
        if survivors_only:
            keep = batch.default_time > t
            inputs, y = inputs[keep], y[keep]
        key = int(gi) if per_monitor else i + 1
        prev = _fit_net_for_date(inputs, y, hidden, schedule, bank, ("pr", key), hidden_activation, warm=prev)
        surface.nets[key] = prev
    return surface


@dataclass
class ExposureProfile:
    """Discounted exposure statistics on the monitoring grid.

    ``pfe`` maps a percentile level to its curve. The t=0 entry is the
    deterministic time-0 exposure (EE and all PFE levels coincide there).
    """

    times: np.ndarray
    ee: np.ndarray
    ee_se: np.ndarray
    pfe: dict
    per_contract_ee: np.ndarray | None = None

    def as_rows(self) -> list:
        levels = sorted(self.pfe)
        header = ["time", "ee", "ee_se"] + [f"pfe_{100 * lv:g}" for lv in levels]
        if self.per_contract_ee is not None:
            header += [f"ee_contract_{j + 1}" for j in range(self.per_contract_ee.shape[1])]
        rows = [header]
        for k, t in enumerate(self.times):
            row = [t, self.ee[k], self.ee_se[k]] + [self.pfe[lv][k] for lv in levels]
            if self.per_contract_ee is not None:
                row += list(self.per_contract_ee[k])
            rows.append(row)
        return rows


def exposure_profile(
    surface: ValueSurface,
    batch: PathBatch,
    result: StoppingResult,
    levels=(0.025, 0.975),
    netted_exposure: bool | None = None,
) -> ExposureProfile:
    """Pathwise regressed exposures aggregated into EE and PFE curves.

    Without netting the exposure is the sum of per-contract positive parts of
    the flag-masked values; with netting (PR surfaces) the positive part of
    the netted total. Exposures are discounted to time 0, and exercised
    contracts contribute exactly zero through the flag mask.
    """
    for lv in levels:
        if not 0.0 < lv < 1.0:
            raise ValueError("PFE levels must lie strictly inside (0, 1)")
    if netted_exposure is None:
        netted_exposure = surface.mode == "pr"
    grid_times = surface.grid_times
    r = surface.r
    m = batch.n_paths
    n_times = grid_times.shape[0]
    j_contracts = result.amounts.shape[1]

    ee = np.zeros(n_times)
    ee_se = np.zeros(n_times)
    pfe = {lv: np.zeros(n_times) for lv in levels}
    per_contract = np.zeros((n_times, j_contracts)) if surface.mode == "ir" else None

    # t = 0: single deterministic state; exposures equal the value estimate
    flows0 = result.contract_flows_at_zero(strict_discounting=True)
    v0 = flows0.mean(axis=0)
    e0 = max(float(v0.sum()), 0.0) if netted_exposure else float(np.maximum(v0, 0.0).sum())
    ee[0] = e0
    for lv in levels:
        pfe[lv][0] = e0
    if per_contract is not None:
        per_contract[0] = np.maximum(v0, 0.0)

    for k in range(1, n_times):
        t = grid_times[k]
        x = batch.states[:, k, :]
        alpha = result.alive_flags_at(t)
        if surface.mode == "pr":
            vals = surface.values_at(x, k, alpha=alpha)
            exposure = np.maximum(vals, 0.0)
        else:
            vals = surface.values_at(x, k) * alpha
            if netted_exposure:
                exposure = np.maximum(vals.sum(axis=1), 0.0)
            else:
                exposure = np.maximum(vals, 0.0).sum(axis=1)
            if per_contract is not None:
                per_contract[k] = np.exp(-r * t) * np.maximum(vals, 0.0).mean(axis=0)
        disc_exposure = np.exp(-r * t) * exposure
        ee[k] = disc_exposure.mean()
        ee_se[k] = disc_exposure.std(ddof=1) / np.sqrt(m)
        for lv in levels:
            pfe[lv][k] = empirical_percentile(disc_exposure, lv)

    return ExposureProfile(grid_times.copy(), ee, ee_se, pfe, per_contract)


def save_surface(path, surface: ValueSurface) -> None:
    arrays = {
        "meta": np.array(
            json.dumps(
                {
                    "format_version": _SURFACE_FORMAT_VERSION,
                    "mode": surface.mode,
                    "r": surface.r,
                    "portfolio_hash": surface.portfolio_hash,
                    "per_monitor": surface.per_monitor,
                    "dates": sorted(surface.nets),
                }
            )
        ),
        "grid_times": surface.grid_times,
        "exercise_idx": surface.exercise_idx,
        "dividend_yields": surface.q,
    }
    for n, net in surface.nets.items():
        arrays.update(nn.pack_net(net, f"net{n}_"))
    np.savez_compressed(path, **arrays)


def load_surface(path) -> ValueSurface:
    with np.load(path) as data:
        meta = json.loads(str(data["meta"]))
        if meta["format_version"] != _SURFACE_FORMAT_VERSION:
            raise ValueError(f"unsupported surface format version {meta['format_version']}")
        surface = ValueSurface(
            meta["mode"],
            np.asarray(data["grid_times"]),
            np.asarray(data["exercise_idx"]),
            float(meta["r"]),
            np.asarray(data["dividend_yields"]),
            portfolio_hash=meta["portfolio_hash"],
            per_monitor=bool(meta.get("per_monitor", False)),
        )
        for n in meta["dates"]:
            surface.nets[int(n)] = nn.unpack_net(data, f"net{int(n)}_")
    return surface
