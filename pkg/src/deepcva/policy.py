"""Backward-in-time training of exercise-decision networks and policy rolls.

One network per exercise date maps the market state (optionally augmented
with the immediate payoffs, and with the exercise-state flags for the netted
problem) to per-contract exercise probabilities. Training maximises expected
discounted cash flows date by date, from the penultimate date backwards,
using the continuous network outputs in the optimisation and the rounded
binary decisions when cash flows are updated. Trained policies compose into
first-exercise stopping times evaluated by a forward roll on fresh paths.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .market import PathBatch, DefaultParams, discount
from .portfolio import (
    PortfolioSpec,
    payoff_matrix,
    terminal_decisions,
    closeout_contract,
    closeout_netted,
)
from .seeds import SeedBank

__all__ = [
    "DecisionPolicy",
    "StoppingResult",
    "train_risk_free",
    "train_risky_no_netting",
    "train_risky_netted",
    "evaluate_stopping",
    "value_at_zero",
    "save_policy",
    "load_policy",
]

_POLICY_FORMAT_VERSION = 1


# ---------------------------------------------------------------------------
# policy container


@dataclass
class DecisionPolicy:
    """Trained decision networks per exercise date, plus the fixed rules.

    ``kind`` is one of "risk_free", "risky", "risky_netted". Netted policies
    take the exercise-state flags as additional inputs. Decisions at each
    contract's own maturity follow the hard-coded terminal rule and dates past
    maturity always decide 0, so ``nets`` only covers dates with at least one
    trainable contract.
    """

    kind: str
    portfolio_hash: str
    augment_payoffs: bool
    nets: dict = field(default_factory=dict)
    train_seed: int = 0

    @property
    def uses_alpha(self) -> bool:
        return self.kind == "risky_netted"

    def continuous(self, n: int, x: np.ndarray, g: np.ndarray, alpha=None) -> np.ndarray:
        """Raw network outputs in (0,1)^J at date n (zeros if no net there)."""
        net = self.nets.get(n)
        if net is None:
            return np.zeros((x.shape[0], g.shape[1]))
        return net(_decision_inputs(x, g, alpha if self.uses_alpha else None, self.augment_payoffs))


def _decision_inputs(x: np.ndarray, g: np.ndarray, alpha, augment: bool) -> np.ndarray:
    cols = [x]
    if augment:
        cols.append(g)
    if alpha is not None:
        cols.append(alpha)
    return np.concatenate(cols, axis=1)


def _decision_input_dim(d: int, n_contracts: int, augment: bool, use_alpha: bool) -> int:
    return d + (n_contracts if augment else 0) + (n_contracts if use_alpha else 0)


def policy_decisions(
    policy: DecisionPolicy,
    portfolio: PortfolioSpec,
    n: int,
    t: float,
    x: np.ndarray,
    g: np.ndarray,
    alpha=None,
) -> np.ndarray:
    """Binary decisions at date n: terminal rule at maturities, rounded network
    outputs for trainable contracts, 0 for inactive ones."""
    decisions = terminal_decisions(portfolio, t, g)
    trainable = _trainable_contracts(portfolio, t)
    if trainable and policy.nets.get(n) is not None:
        probs = policy.continuous(n, x, g, alpha)
        decisions[:, trainable] = nn.round_off(probs[:, trainable])
    return decisions


def _trainable_contracts(portfolio: PortfolioSpec, t: float) -> list[int]:
    out = []
    for j, c in enumerate(portfolio.contracts):
        if c.can_exercise_at(t) and t < c.maturity - 1e-9:
            out.append(j)
    return out


# ---------------------------------------------------------------------------
# forward roll (stopping-time composition) and time-0 estimator


@dataclass
class StoppingResult:
    """Realised stopping dates and cash-flow amounts of a policy roll.

    ``amounts`` are undiscounted payoff amounts paid at ``stop_times``
    (+inf / amount 0 where a contract never exercises with positive payoff).
    ``closeout_values`` holds the risk-free reference values at the default
    time for contracts alive at default (zero elsewhere); recovery, netting
    and collateral are applied by the flow accessors.
    """

    portfolio: PortfolioSpec
    r: float
    stop_date_idx: np.ndarray
    stop_times: np.ndarray
    amounts: np.ndarray
    default_time: np.ndarray
    closeout_values: np.ndarray
    recovery: float = 0.0

    @property
    def n_paths(self) -> int:
        return self.stop_times.shape[0]

    def contract_flows_at_zero(self, strict_discounting: bool = False) -> np.ndarray:
        """Per-path, per-contract exercise legs discounted to t=0.

        Margined contracts settle through a margin account and enter value
        estimators undiscounted unless ``strict_discounting`` is set (used by
        the regression targets, which estimate close-out reference values).
        """
        tau = np.where(np.isfinite(self.stop_times), self.stop_times, 0.0)
        disc = np.exp(-self.r * tau)
        if not strict_discounting:
            for j, c in enumerate(self.portfolio.contracts):
                if c.margined:
                    disc[:, j] = 1.0
        return self.amounts * disc

    def closeout_flows_contract(self) -> np.ndarray:
        """Per-contract close-out legs R*V^+ + V^- at default, discounted to 0."""
        flows = closeout_contract(self.closeout_values, self.recovery)
        defaulted = np.isfinite(self.default_time)
        disc = np.where(defaulted, np.exp(-self.r * np.where(defaulted, self.default_time, 0.0)), 0.0)
        return flows * disc[:, None]

    def closeout_flow_netted(self, collateral: float) -> np.ndarray:
        """Netted close-out leg with collateral at default, discounted to 0.

        R*(V-C)^+ + (V-C)^- + C vanishes at V = 0, so paths whose contracts all
        settled before default contribute nothing (collateral round-trips).
        """
        defaulted = np.isfinite(self.default_time)
        total = self.closeout_values.sum(axis=1)
        flows = np.where(defaulted, closeout_netted(total, self.recovery, collateral), 0.0)
        return flows * np.where(defaulted, np.exp(-self.r * np.where(defaulted, self.default_time, 0.0)), 0.0)

    def path_totals(self, netted: bool = False, collateral: float = 0.0) -> np.ndarray:
        totals = self.contract_flows_at_zero().sum(axis=1)
        if netted:
            totals += self.closeout_flow_netted(collateral)
        else:
            totals += self.closeout_flows_contract().sum(axis=1)
        return totals

    def alive_flags_at(self, t: float) -> np.ndarray:
        """Exercise-state flags 1{stop time > t} (exercising at t counts as settled)."""
        return (self.stop_times > t + 1e-9).astype(float)


def roll_policy(
    policy: DecisionPolicy,
    batch: PathBatch,
    portfolio: PortfolioSpec,
    dp: DefaultParams | None = None,
    surface=None,
    start_n: int = 1,
    alive0: np.ndarray | None = None,
) -> StoppingResult:
    """Apply a trained policy forward along simulated paths.

    Decisions are blocked from a path's default time onwards; contracts alive
    at default are valued off the risk-free ``surface`` (required whenever
    defaults are present) and recorded for close-out.
    """
    grid = batch.grid
    m = batch.n_paths
    n_contracts = portfolio.n_contracts
    ex_idx = grid.exercise_idx
    ex_times = grid.exercise_times

    alive = np.ones((m, n_contracts), dtype=bool) if alive0 is None else np.asarray(alive0, dtype=bool).copy()
    stop_idx = np.zeros((m, n_contracts), dtype=int)
    stop_times = np.full((m, n_contracts), np.inf)
    amounts = np.zeros((m, n_contracts))

    default_time = batch.default_time
    has_defaults = np.isfinite(default_time).any()
    if has_defaults and dp is None:
        raise ValueError("batch carries default times but no DefaultParams were given")

    for n in range(start_n, grid.n_dates + 1):
        t = ex_times[n - 1]
        x = batch.states[:, ex_idx[n - 1], :]
        g = payoff_matrix(portfolio, t, x)
        decisions = policy_decisions(policy, portfolio, n, t, x, g, alpha=alive.astype(float))
        decisions &= alive
        decisions &= (default_time > t)[:, None]
        stop_idx[decisions] = n
        stop_times = np.where(decisions, t, stop_times)
        amounts = np.where(decisions, g, amounts)
        alive &= ~decisions

    closeout_values = np.zeros((m, n_contracts))
    if has_defaults:
        if surface is None:
            raise ValueError("defaults occurred but no risk-free value surface was supplied for close-out")
        defaulted = np.isfinite(default_time) & (default_time <= portfolio.maturity + 1e-9)
        if defaulted.any():
            rows = np.nonzero(defaulted)[0]
            gi = batch.default_idx[rows]
            vals = np.zeros((rows.shape[0], n_contracts))
            for g_idx in np.unique(gi):
                sel = gi == g_idx
                vals[sel] = surface.values_at(batch.states[rows[sel], g_idx, :], int(g_idx))
            # only contracts still alive at default and not yet expired are closed out
            live = alive[rows] & (default_time[rows][:, None] <= _maturities(portfolio)[None, :] + 1e-9)
            closeout_values[rows] = np.where(live, vals, 0.0)

    return StoppingResult(
        portfolio=portfolio,
        r=batch.params.r,
        stop_date_idx=stop_idx,
        stop_times=stop_times,
        amounts=amounts,
        default_time=default_time.copy(),
        closeout_values=closeout_values,
        recovery=dp.recovery if dp is not None else 0.0,
    )


def _maturities(portfolio: PortfolioSpec) -> np.ndarray:
    return np.array([c.maturity for c in portfolio.contracts])


def evaluate_stopping(
    policy: DecisionPolicy,
    batch: PathBatch,
    portfolio: PortfolioSpec,
    dp: DefaultParams | None = None,
    surface=None,
) -> StoppingResult:
    """Roll a policy from the first exercise date over a fresh path batch."""
    return roll_policy(policy, batch, portfolio, dp=dp, surface=surface)


def value_at_zero(
    result: StoppingResult,
    netted: bool = False,
    collateral: float = 0.0,
) -> tuple[float, float]:
    """Time-0 value estimate (sample mean of discounted path totals) and its
    standard error. Sub-optimality of any trained policy biases this low."""
    totals = result.path_totals(netted=netted, collateral=collateral)
    value = float(totals.mean())
    se = float(totals.std(ddof=1) / np.sqrt(totals.shape[0])) if totals.shape[0] > 1 else 0.0
    return value, se


# ---------------------------------------------------------------------------
# training


def _step_discounts(portfolio: PortfolioSpec, r: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-date-interval discounts: per-contract (margined-aware) and plain."""
    dates = np.array((0.0,) + portfolio.union_dates)
    plain = np.exp(-r * np.diff(dates))
    per_contract = np.repeat(plain[:, None], portfolio.n_contracts, axis=1)
    for j, c in enumerate(portfolio.contracts):
        if c.margined:
            per_contract[:, j] = 1.0
    return per_contract, plain


def _closeout_data(batch: PathBatch, portfolio: PortfolioSpec, dp: DefaultParams, surface):
    """Per-path close-out reference values at default and interval bookkeeping."""
    m = batch.n_paths
    n_contracts = portfolio.n_contracts
    values = np.zeros((m, n_contracts))
    defaulted = np.isfinite(batch.default_time) & (batch.default_time <= portfolio.maturity + 1e-9)
    if defaulted.any():
        if surface is None:
            raise ValueError("risky training requires a risk-free value surface for close-out")
        rows = np.nonzero(defaulted)[0]
        gi = batch.default_idx[rows]
        vals = np.zeros((rows.shape[0], n_contracts))
        for g_idx in np.unique(gi):
            sel = gi == g_idx
            vals[sel] = surface.values_at(batch.states[rows[sel], g_idx, :], int(g_idx))
        expired = batch.default_time[rows][:, None] > _maturities(portfolio)[None, :] + 1e-9
        values[rows] = np.where(expired, 0.0, vals)
    # exercise interval containing the default time (1-based), 0 when no default
    interval = np.zeros(m, dtype=int)
    if defaulted.any():
        interval[defaulted] = batch.grid.date_interval_of(batch.default_idx[defaulted])
    return defaulted, interval, values


def _fit_scaler_and_net(
    cfg: nn.NetworkConfig,
    inputs: np.ndarray,
    rng_init: np.random.Generator,
    warm_net: nn.TrainedNet | None,
    n_extra_features: int = 0,
):
    """Fresh fan-in init, or a warm start extended with zero-weight extra inputs."""
    if warm_net is None:
        scaler = nn.InputScaler.fit(inputs)
        params = nn.init_params(cfg, rng_init)
        return scaler, params
    base_dim = warm_net.cfg.input_dim
    if base_dim + n_extra_features != cfg.input_dim:
        raise ValueError("warm-start network input size mismatch")
    params = warm_net.params.copy()
    if n_extra_features:
        extra_scaler = nn.InputScaler.fit(inputs[:, base_dim:])
        scaler = nn.InputScaler(
            np.concatenate([warm_net.x_scaler.mean, extra_scaler.mean]),
            np.concatenate([warm_net.x_scaler.std, extra_scaler.std]),
        )
        w0 = np.zeros((cfg.input_dim, params.weights[0].shape[1]))
        w0[:base_dim] = params.weights[0]
        params.weights[0] = w0
    else:
        scaler = warm_net.x_scaler
    return scaler, params


def _train_date_net(
    cfg: nn.NetworkConfig,
    inputs: np.ndarray,
    rows_mask: np.ndarray,
    loss_grad_full,
    schedule: nn.TrainSchedule,
    bank: SeedBank,
    date_n: int,
    t: float,
    kind: str,
    warm_net: nn.TrainedNet | None,
    n_extra_features: int = 0,
) -> nn.TrainedNet:
    """Train one date's decision net on the selected rows."""
    rows = np.nonzero(rows_mask)[0]
    scaler, params = _fit_scaler_and_net(
        cfg, inputs[rows], bank.generator("init", kind, date_n), warm_net, n_extra_features
    )
    scaled = scaler.apply(inputs[rows])

    def loss_grad(batch_rows, out):
        return loss_grad_full(rows[batch_rows], out)

    try:
        nn.train_network(params, cfg, scaled, loss_grad, schedule, bank.generator("shuffle", kind, date_n))
    except FloatingPointError as exc:
        raise ValueError(f"training aborted at exercise date T_{date_n}={t:g}: {exc}") from exc
    return nn.TrainedNet(cfg, params, scaler)


def _backward_training(
    batch: PathBatch,
    portfolio: PortfolioSpec,
    net_hidden,
    schedule: nn.TrainSchedule,
    bank: SeedBank,
    kind: str,
    augment: bool,
    dp: DefaultParams | None = None,
    surface=None,
    warm_from: DecisionPolicy | None = None,
    chain_dates: bool = True,
) -> DecisionPolicy:
    """Shared backward recursion for the risk-free and the un-netted risky problem.

    With ``chain_dates`` each date's network starts from the trained network of
    the following date (exercise boundaries move slowly in time, and chaining
    keeps per-date fitting errors from compounding through the cash-flow
    recursion); ``warm_from`` overrides with the same-date net of another
    policy instead.
    """
    grid = batch.grid
    m = batch.n_paths
    n_contracts = portfolio.n_contracts
    ex_times = grid.exercise_times
    n_dates = grid.n_dates
    per_contract_disc, plain_disc = _step_discounts(portfolio, batch.params.r)

    risky = dp is not None
    if risky:
        defaulted, def_interval, co_values = _closeout_data(batch, portfolio, dp, surface)
        co_amounts = closeout_contract(co_values, dp.recovery)

    cfg = nn.NetworkConfig(
        input_dim=_decision_input_dim(batch.params.d, n_contracts, augment, False),
        hidden=tuple(net_hidden),
        output_dim=n_contracts,
        output_activation="sigmoid",
    )

    policy = DecisionPolicy(
        kind=kind,
        portfolio_hash=portfolio.content_hash(),
        augment_payoffs=augment,
        train_seed=bank.master_seed,
    )

    cf = np.zeros((m, n_contracts))  # exercise legs, at current-date value
    co = np.zeros((m, n_contracts))  # close-out legs, at current-date value
    prev_net: nn.TrainedNet | None = None

    for n in range(n_dates, 0, -1):
        t = ex_times[n - 1]
        x = batch.states[:, grid.exercise_idx[n - 1], :]
        g = payoff_matrix(portfolio, t, x)
        decisions = terminal_decisions(portfolio, t, g)
        trainable = _trainable_contracts(portfolio, t)
        alive_rows = batch.default_time > t if risky else np.ones(m, dtype=bool)

        if trainable:
            inputs = _decision_inputs(x, g, None, augment)
            cont = cf + co
            target_cols = np.array(trainable)

            def loss_grad_full(rows, out):
                gb = g[rows][:, target_cols]
                cb = cont[rows][:, target_cols]
                f = out[:, target_cols]
                loss = -np.mean(np.sum(f * gb + (1.0 - f) * cb, axis=1))
                grad = np.zeros_like(out)
                grad[:, target_cols] = -(gb - cb) / rows.shape[0]
                return loss, grad

            warm_net = warm_from.nets.get(n) if warm_from is not None else None
            if warm_net is None and chain_dates:
                warm_net = prev_net
            net = _train_date_net(
                cfg, inputs, alive_rows, loss_grad_full, schedule, bank, n, t, kind, warm_net
            )
            policy.nets[n] = net
            prev_net = net
            probs = net(inputs)
            decisions[:, target_cols] = nn.round_off(probs[:, target_cols])

        decisions &= alive_rows[:, None]
        cf = np.where(decisions, g, cf)
        co = np.where(decisions, 0.0, co)
        cf *= per_contract_disc[n - 1][None, :]
        co *= plain_disc[n - 1]
        if risky:
            fresh = defaulted & (def_interval == n)
            if fresh.any():
                t_prev = ex_times[n - 2] if n >= 2 else 0.0
                disc_def = np.exp(-batch.params.r * (batch.default_time[fresh] - t_prev))
                co[fresh] = disc_def[:, None] * co_amounts[fresh]
                cf[fresh] = 0.0

    return policy


def train_risk_free(
    batch: PathBatch,
    portfolio: PortfolioSpec,
    schedule: nn.TrainSchedule,
    seed: int,
    hidden=(30, 30, 30),
    augment_payoffs: bool = True,
) -> DecisionPolicy:
    """Learn the risk-free exercise policy by backward cash-flow maximisation."""
    bank = seed if isinstance(seed, SeedBank) else SeedBank(seed)
    return _backward_training(batch, portfolio, hidden, schedule, bank, "risk_free", augment_payoffs)


def train_risky_no_netting(
    batch: PathBatch,
    portfolio: PortfolioSpec,
    value_surface,
    dp: DefaultParams,
    schedule: nn.TrainSchedule,
    seed: int,
    hidden=(30, 30, 30),
    augment_payoffs: bool = True,
    warm_from: DecisionPolicy | None = None,
) -> DecisionPolicy:
    """Risky policy without netting: defaulted continuations pay the per-contract
    close-out R*V^+ + V^- read off the risk-free value surface."""
    if value_surface is None:
        raise ValueError("risky training requires the risk-free value surface")
    bank = seed if isinstance(seed, SeedBank) else SeedBank(seed)
    return _backward_training(
        batch,
        portfolio,
        hidden,
        schedule,
        bank,
        "risky",
        augment_payoffs,
        dp=dp,
        surface=value_surface,
        warm_from=warm_from,
    )


def train_risky_netted(
    batch: PathBatch,
    portfolio: PortfolioSpec,
    value_surface,
    dp: DefaultParams,
    schedule: nn.TrainSchedule,
    seed: int,
    hidden=(30, 30, 30),
    augment_payoffs: bool = True,
    warm_from: DecisionPolicy | None = None,
) -> DecisionPolicy:
    """Netted risky policy: networks also see the exercise-state flags.

    At each backward date the exercise state is randomised per path and the
    continuation cash flows are re-rolled through the already-trained
    later-date networks; the netted close-out couples the contracts inside the
    positive/negative parts, so decisions are learned jointly.
    """
    if value_surface is None:
        raise ValueError("risky training requires the risk-free value surface")
    bank = seed if isinstance(seed, SeedBank) else SeedBank(seed)
    grid = batch.grid
    m = batch.n_paths
    n_contracts = portfolio.n_contracts
    ex_times = grid.exercise_times
    r = batch.params.r
    collateral = portfolio.collateral

    defaulted, _, co_values = _closeout_data(batch, portfolio, dp, value_surface)

    cfg = nn.NetworkConfig(
        input_dim=_decision_input_dim(batch.params.d, n_contracts, augment_payoffs, True),
        hidden=tuple(hidden),
        output_dim=n_contracts,
        output_activation="sigmoid",
    )
    policy = DecisionPolicy(
        kind="risky_netted",
        portfolio_hash=portfolio.content_hash(),
        augment_payoffs=augment_payoffs,
        train_seed=bank.master_seed,
    )

    first_dates = np.array([c.exercise_dates[0] for c in portfolio.contracts])

    for n in range(grid.n_dates - 1, 0, -1):
        t = ex_times[n - 1]
        trainable = _trainable_contracts(portfolio, t)
        if not trainable:
            continue
        x = batch.states[:, grid.exercise_idx[n - 1], :]
        g = payoff_matrix(portfolio, t, x)

        rng_alpha = bank.generator("alpha", n)
        alpha = (rng_alpha.random((m, n_contracts)) < 0.5).astype(float)
        alpha[:, first_dates >= t - 1e-9] = 1.0

        rolled = roll_policy(
            policy, batch, portfolio, dp=dp, surface=value_surface, start_n=n + 1, alive0=alpha > 0.5
        )
        tau = np.where(np.isfinite(rolled.stop_times), rolled.stop_times, t)
        disc_to_t = np.exp(-r * (tau - t))
        for j, c in enumerate(portfolio.contracts):
            if c.margined:
                disc_to_t[:, j] = 1.0
        cont_g = rolled.amounts * disc_to_t

        # close-out membership from the re-roll: contracts alive when default hits after T_n
        co_here = np.where((batch.default_time > t)[:, None], rolled.closeout_values, 0.0)
        def_here = defaulted & (batch.default_time > t)
        disc_def = np.where(def_here, np.exp(-r * (np.where(def_here, batch.default_time, t) - t)), 0.0)

        # fixed decisions for non-trainable contracts (terminal rule / inactive)
        fixed = terminal_decisions(portfolio, t, g).astype(float)
        alive_rows = batch.default_time > t
        inputs = _decision_inputs(x, g, alpha, augment_payoffs)
        target_cols = np.array(trainable)
        fixed_cols = np.setdiff1d(np.arange(n_contracts), target_cols)

        def loss_grad_full(rows, out):
            f = fixed[rows].copy()
            f[:, target_cols] = out[:, target_cols]
            a = alpha[rows]
            gb, cb, cov = g[rows], cont_g[rows], co_here[rows]
            keep = a * (1.0 - f)
            u = np.sum(keep * cov, axis=1)
            closeout = disc_def[rows] * closeout_netted(u, dp.recovery, collateral)
            total = np.sum(a * (f * gb + (1.0 - f) * cb), axis=1) + closeout
            loss = -np.mean(total)
            psi_slope = np.where(u > collateral, dp.recovery, 1.0)
            grad = np.zeros_like(out)
            grad[:, target_cols] = -(
                a[:, target_cols] * (gb[:, target_cols] - cb[:, target_cols])
                - (disc_def[rows] * psi_slope)[:, None] * a[:, target_cols] * cov[:, target_cols]
            ) / rows.shape[0]
            return loss, grad

        warm_net = warm_from.nets.get(n) if warm_from is not None else None
        net = _train_date_net(
            cfg,
            inputs,
            alive_rows,
            loss_grad_full,
            schedule,
            bank,
            n,
            t,
            "risky_netted",
            warm_net,
            n_extra_features=n_contracts,
        )
        policy.nets[n] = net

    return policy


# ---------------------------------------------------------------------------
# serialisation


def save_policy(path, policy: DecisionPolicy) -> None:
    arrays = {
        "meta": np.array(
            json.dumps(
                {
                    "format_version": _POLICY_FORMAT_VERSION,
                    "kind": policy.kind,
                    "portfolio_hash": policy.portfolio_hash,
                    "augment_payoffs": policy.augment_payoffs,
                    "train_seed": policy.train_seed,
                    "dates": sorted(policy.nets),
                }
            )
        )
    }
    for n, net in policy.nets.items():
        arrays.update(nn.pack_net(net, f"net{n}_"))
    np.savez_compressed(path, **arrays)


def load_policy(path) -> DecisionPolicy:
    with np.load(path) as data:
        meta = json.loads(str(data["meta"]))
        if meta["format_version"] != _POLICY_FORMAT_VERSION:
            raise ValueError(f"unsupported policy format version {meta['format_version']}")
        policy = DecisionPolicy(
            kind=meta["kind"],
            portfolio_hash=meta["portfolio_hash"],
            augment_payoffs=meta["augment_payoffs"],
            train_seed=meta["train_seed"],
        )
        for n in meta["dates"]:
            policy.nets[int(n)] = nn.unpack_net(data, f"net{int(n)}_")
    return policy
