import itertools
import math

import numpy as np
import pytest

from deepcva import market, oracle
from deepcva.portfolio import ContractSpec, benchmark_option_portfolio


def test_strike_zero_call_is_discounted_forward(params2d):
    value = oracle.bs_european("1d-call", params2d, 0.0, 3.0)
    assert value == pytest.approx(100.0 * math.exp(-0.3), rel=1e-12)


def test_zero_volatility_is_discounted_intrinsic():
    p = market.MarketParams(s0=[100.0], r=0.05, q=[0.1], sigma=[0.0], rho=np.eye(1), horizon=3.0)
    fwd = 100.0 * math.exp(-0.15)
    assert oracle.bs_european("1d-put", p, 100.0, 3.0) == pytest.approx(math.exp(-0.15) * (100.0 - fwd))
    assert oracle.bs_european("1d-call", p, 100.0, 3.0) == pytest.approx(0.0)


def test_frozen_european_fixtures(params2d, oracle_refs):
    for kind, ref in oracle_refs["european"].items():
        assert oracle.bs_european(kind, params2d, 100.0, 3.0) == pytest.approx(ref, abs=1e-9)


def test_geo_reduction_parameters(params2d):
    s0, sigma, q, is_call = oracle.reduce_to_lognormal("geo-put", params2d)
    assert s0 == pytest.approx(100.0)
    assert sigma == pytest.approx(0.2 / math.sqrt(2.0))
    assert q == pytest.approx(0.11)
    assert not is_call


def test_non_reducible_payoff_rejected(params2d):
    with pytest.raises(ValueError, match="not reducible"):
        oracle.bs_european("max-call", params2d, 100.0, 3.0)
    port = benchmark_option_portfolio()
    with pytest.raises(ValueError, match="not reducible"):
        oracle.lattice_bermudan("arith-put", params2d, 100.0, port.union_dates)


def test_lattice_converges_under_step_doubling(params2d, benchmark_dates):
    for kind in ("geo-put", "1d-call"):
        coarse = oracle.lattice_bermudan(kind, params2d, 100.0, benchmark_dates, steps_per_year=600)
        fine = oracle.lattice_bermudan(kind, params2d, 100.0, benchmark_dates, steps_per_year=1200)
        assert abs(fine - coarse) < 1e-3


def test_lattice_matches_frozen_fixtures(params2d, benchmark_dates, oracle_refs):
    for kind in ("geo-call", "geo-put", "1d-call", "1d-put"):
        value = oracle.lattice_bermudan(kind, params2d, 100.0, benchmark_dates, steps_per_year=1200)
        assert value == pytest.approx(oracle_refs["bermudan"][kind], abs=2e-3)


def test_maturity_only_lattice_equals_european(params2d):
    for kind in ("1d-put", "geo-call"):
        lattice = oracle.lattice_bermudan(kind, params2d, 100.0, (3.0,), steps_per_year=1200)
        closed = oracle.bs_european(kind, params2d, 100.0, 3.0)
        assert lattice == pytest.approx(closed, abs=5e-3)


def test_misaligned_exercise_dates_rejected(params2d):
    with pytest.raises(ValueError, match="does not land on a lattice level"):
        oracle.lattice_bermudan("1d-put", params2d, 100.0, (0.123456, 3.0), steps_per_year=100)


def test_2d_lattice_matches_fixtures(params2d, oracle_refs):
    port = benchmark_option_portfolio()
    for j, kind in ((4, "arith-call"), (5, "arith-put")):
        value = oracle.lattice_bermudan_2d(port.contracts[j], params2d, steps_per_year=120)
        assert value == pytest.approx(oracle_refs["bermudan"][kind], abs=3e-3)


def test_2d_lattice_cross_checks_1d_reduction(params2d, benchmark_dates, oracle_refs):
    port = benchmark_option_portfolio()
    value = oracle.lattice_bermudan_2d(port.contracts[3], params2d, steps_per_year=120)
    assert value == pytest.approx(oracle_refs["bermudan"]["geo-put"], abs=5e-3)


def test_2d_lattice_requires_uncorrelated_pair():
    rho = np.array([[1.0, 0.5], [0.5, 1.0]])
    p = market.MarketParams(s0=[100.0, 100.0], r=0.05, q=[0.1, 0.1], sigma=[0.2, 0.2], rho=rho, horizon=3.0)
    c = ContractSpec(contract_id=1, kind="arith-put", strike=100.0, exercise_dates=(3.0,), assets=(0, 1))
    with pytest.raises(ValueError, match="uncorrelated"):
        oracle.lattice_bermudan_2d(c, p, steps_per_year=12)


def _two_date_tree():
    # binomial: 100 -> {90, 110} -> {84/100, 100/121}
    return oracle.TinyTree(
        dates=(1.0, 2.0),
        root=100.0,
        states=(np.array([90.0, 110.0]), np.array([84.0, 100.0, 121.0])),
        probs=(
            np.array([[0.5, 0.5]]),
            np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5]]),
        ),
        rate=0.0,
    )


def _put_payoff(strike=100.0):
    def payoff(t, states):
        return np.maximum(strike - np.asarray(states), 0.0)

    return payoff


def test_single_date_tree_value():
    tree = oracle.TinyTree(
        dates=(1.0,),
        root=100.0,
        states=(np.array([80.0, 120.0]),),
        probs=(np.array([[0.5, 0.5]]),),
        rate=0.0,
    )
    value, decisions = oracle.exhaustive_stopping(tree, _put_payoff())
    assert value == pytest.approx(0.5 * 20.0)
    np.testing.assert_array_equal(decisions[0], [True, False])


def test_two_date_tree_hand_value():
    tree = _two_date_tree()
    value, decisions = oracle.exhaustive_stopping(tree, _put_payoff())
    # terminal values: (16, 0, 0); at t=1: state 90 exercises (10 > 0.5*16),
    # state 110 continues (payoff 0, ties continue); root = 0.5*10 + 0.5*0
    assert value == pytest.approx(5.0)
    np.testing.assert_array_equal(decisions[0], [True, False])
    np.testing.assert_array_equal(decisions[1], [True, False, False])


def test_zero_payoff_tree_all_continue():
    tree = _two_date_tree()
    value, decisions = oracle.exhaustive_stopping(tree, lambda t, s: np.zeros_like(np.asarray(s)))
    assert value == 0.0
    for d in decisions:
        assert not d.any()


def test_bellman_dominates_every_fixed_policy():
    tree = _two_date_tree()
    payoff = _put_payoff()
    best, _ = oracle.exhaustive_stopping(tree, payoff)
    sizes = [s.shape[0] for s in tree.states]
    for bits in itertools.product([False, True], repeat=sum(sizes)):
        d1 = np.array(bits[: sizes[0]])
        d2 = np.array(bits[sizes[0] :])
        value = oracle.policy_value_on_tree(tree, payoff, [d1, d2])
        assert value <= best + 1e-12


def test_enumerate_tree_paths():
    tree = _two_date_tree()
    paths, weights = oracle.enumerate_tree_paths(tree)
    assert paths.shape == (4, 3)
    assert weights.sum() == pytest.approx(1.0)
    np.testing.assert_allclose(weights, 0.25)
    assert {tuple(p) for p in paths} == {
        (100.0, 90.0, 84.0),
        (100.0, 90.0, 100.0),
        (100.0, 110.0, 100.0),
        (100.0, 110.0, 121.0),
    }


def test_tree_validation():
    with pytest.raises(ValueError, match="sum to 1"):
        oracle.TinyTree(
            dates=(1.0,),
            root=1.0,
            states=(np.array([1.0, 2.0]),),
            probs=(np.array([[0.6, 0.6]]),),
        )
