import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from deepcva import market, oracle


def test_make_grid_marks_exercise_dates(benchmark_dates, grid9):
    assert grid9.times[0] == 0.0
    assert np.all(np.diff(grid9.times) > 0)
    np.testing.assert_allclose(grid9.exercise_times, benchmark_dates)
    assert grid9.times.shape[0] == 1 + 4 * len(benchmark_dates)


def test_date_interval_of(grid9):
    # first sub-step, an exact date, and one step past it
    assert grid9.date_interval_of(np.array([1]))[0] == 1
    assert grid9.date_interval_of(np.array([4]))[0] == 1
    assert grid9.date_interval_of(np.array([5]))[0] == 2
    assert grid9.date_interval_of(np.array([36]))[0] == 9


def test_sigma_zero_degenerate():
    p = market.MarketParams(s0=[100.0], r=0.05, q=[0.1], sigma=[0.0], rho=np.eye(1), horizon=3.0)
    grid = market.make_grid((3.0,), monitor_steps=1)
    batch = market.simulate_paths(p, grid, 7, seed=3)
    np.testing.assert_allclose(batch.states[:, -1, 0], 100.0 * np.exp(-0.15))


def test_martingale_property(params2d, batch_small):
    t = batch_small.grid.times[-1]
    for i in range(params2d.d):
        vals = np.exp(-params2d.r * t) * batch_small.states[:, -1, i] * np.exp(params2d.q[i] * t)
        se = vals.std(ddof=1) / np.sqrt(batch_small.n_paths)
        assert abs(vals.mean() - params2d.s0[i]) < 3 * se


def test_geo_average_european_matches_closed_form(params2d, batch_small):
    terminal = batch_small.states[:, -1, :]
    payoff = np.maximum(np.sqrt(terminal[:, 0] * terminal[:, 1]) - 100.0, 0.0)
    disc = np.exp(-params2d.r * 3.0) * payoff
    se = disc.std(ddof=1) / np.sqrt(batch_small.n_paths)
    ref = oracle.bs_european("geo-call", params2d, 100.0, 3.0)
    assert abs(disc.mean() - ref) < 3 * se


def test_brownian_tilde_is_standard(batch_small):
    for k in (9, 20, 36):
        t = batch_small.grid.times[k]
        wt = batch_small.brownian_tilde[:, k]
        se = (wt**2).std(ddof=1) / np.sqrt(batch_small.n_paths)
        assert abs(wt.var() - t) < 3 * se


def test_sigma_tilde_value(params2d):
    assert market.sigma_tilde(params2d) == pytest.approx(0.1 * np.sqrt(2.0), rel=1e-12)


def test_intensity_constant_when_uncoupled(batch_small):
    h = market.intensity_path(batch_small, market.DefaultParams(h_bar=0.07, b=0.0))
    assert np.allclose(h, 0.07)


def test_intensity_at_time_zero_is_spread(batch_small):
    for b in (-0.2, 0.0, 0.3):
        h = market.intensity_path(batch_small, market.DefaultParams(h_bar=0.11, b=b))
        np.testing.assert_allclose(h[:, 0], 0.11)


def test_no_defaults_without_intensity(batch_small):
    wd = market.sample_defaults(batch_small, market.DefaultParams(h_bar=0.0, b=0.0), seed=5)
    assert not np.isfinite(wd.default_time).any()
    assert np.all(wd.default_idx == -1)


def test_survival_matches_constant_intensity(batch_small):
    dp = market.DefaultParams(h_bar=0.1, b=0.0)
    wd = market.sample_defaults(batch_small, dp, seed=5)
    surv = wd.default_time > 3.0
    se = surv.std(ddof=1) / np.sqrt(batch_small.n_paths)
    assert abs(surv.mean() - np.exp(-0.3)) < 3 * se
    # default times land on the monitoring grid
    hit = np.isfinite(wd.default_time)
    assert np.isin(wd.default_time[hit], batch_small.grid.times).all()


@pytest.mark.parametrize("b,h_bar", [(0.2, 0.1), (-0.2, 0.05), (0.3, 0.0)])
def test_survival_consistent_with_integrated_intensity(batch_small, b, h_bar):
    # P(survive | path) = exp(-max_t cumulative integral): for intensities that
    # can dip negative only the first passage of the integral matters, so the
    # plain exp(-integral_0^T) form is an upper bound, exact when h stays >= 0
    dp = market.DefaultParams(h_bar=h_bar, b=b)
    wd = market.sample_defaults(batch_small, dp, seed=5)
    h = market.intensity_path(batch_small, dp)
    dt = np.diff(batch_small.grid.times)
    cumulative = np.cumsum(0.5 * (h[:, :-1] + h[:, 1:]) * dt[None, :], axis=1)
    running_max = np.maximum(np.maximum.accumulate(cumulative, axis=1)[:, -1], 0.0)
    g_hat = np.exp(-running_max)
    surv = (wd.default_time > 3.0).mean()
    se = np.sqrt(g_hat.var() / batch_small.n_paths + surv * (1 - surv) / batch_small.n_paths)
    assert abs(surv - g_hat.mean()) < 3 * se
    assert g_hat.mean() <= np.exp(-cumulative[:, -1]).mean() + 1e-12


def test_discount_examples():
    assert market.discount(0.05, 0.0, 0.0) == pytest.approx(1.0)
    assert market.discount(0.05, 0.0, 3.0) == pytest.approx(np.exp(-0.15))
    assert market.discount(0.0, 1.0, 2.0) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        market.discount(0.05, 2.0, 1.0)


def test_non_psd_correlation_rejected():
    rho = np.array([[1.0, 2.0], [2.0, 1.0]])
    p = market.MarketParams(s0=[1.0, 1.0], r=0.0, q=[0.0, 0.0], sigma=[0.1, 0.1], rho=rho, horizon=1.0)
    with pytest.raises(ValueError, match="positive semi-definite"):
        market.simulate_paths(p, market.make_grid((1.0,)), 4, seed=0)


def test_perfectly_correlated_assets_allowed():
    rho = np.ones((2, 2))
    p = market.MarketParams(s0=[100.0, 100.0], r=0.05, q=[0.0, 0.0], sigma=[0.2, 0.2], rho=rho, horizon=1.0)
    batch = market.simulate_paths(p, market.make_grid((1.0,)), 256, seed=1)
    np.testing.assert_allclose(batch.states[:, :, 0], batch.states[:, :, 1])


def test_param_validation():
    eye = np.eye(1)
    with pytest.raises(ValueError):
        market.MarketParams(s0=[-1.0], r=0.0, q=[0.0], sigma=[0.1], rho=eye, horizon=1.0)
    with pytest.raises(ValueError):
        market.MarketParams(s0=[1.0], r=0.0, q=[0.0], sigma=[-0.1], rho=eye, horizon=1.0)
    with pytest.raises(ValueError):
        market.MarketParams(s0=[1.0], r=0.0, q=[0.0], sigma=[0.1], rho=eye, horizon=0.0)
    with pytest.raises(ValueError):
        market.DefaultParams(h_bar=0.1, b=0.0, recovery=1.0)
    with pytest.raises(ValueError):
        market.DefaultParams(h_bar=0.1, b=0.0, monitor_steps=0)


def test_seed_determinism_and_prefix_stability(params2d, grid9):
    a = market.simulate_paths(params2d, grid9, 512, seed=9)
    b = market.simulate_paths(params2d, grid9, 512, seed=9)
    c = market.simulate_paths(params2d, grid9, 1024, seed=9)
    assert np.array_equal(a.states, b.states)
    assert np.array_equal(a.brownian_tilde, b.brownian_tilde)
    assert np.array_equal(a.states, c.states[:512])


def test_batch_dump_restore_roundtrip(tmp_path, params2d, grid9):
    batch = market.simulate_paths(params2d, grid9, 128, seed=11)
    batch = market.sample_defaults(batch, market.DefaultParams(h_bar=0.2, b=0.1), seed=12)
    path = tmp_path / "batch.npz"
    market.save_batch(path, batch)
    loaded = market.load_batch(path)
    assert np.array_equal(loaded.states, batch.states)
    assert np.array_equal(loaded.default_time, batch.default_time)
    assert np.array_equal(loaded.grid.exercise_idx, batch.grid.exercise_idx)
    assert loaded.params.r == batch.params.r


@settings(max_examples=25, deadline=None)
@given(
    n_dates=st.integers(1, 6),
    monitor=st.integers(1, 5),
    horizon=st.floats(0.5, 5.0),
)
def test_grid_construction_properties(n_dates, monitor, horizon):
    dates = tuple(horizon * k / n_dates for k in range(1, n_dates + 1))
    grid = market.make_grid(dates, monitor_steps=monitor)
    assert grid.n_dates == n_dates
    np.testing.assert_allclose(grid.exercise_times, dates)
    assert grid.times.shape[0] == 1 + monitor * n_dates
