import json
from pathlib import Path

import numpy as np
import pytest

from deepcva import market, nn
from deepcva.portfolio import benchmark_option_portfolio

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def params2d():
    return market.MarketParams(
        s0=[100.0, 100.0], r=0.05, q=[0.1, 0.1], sigma=[0.2, 0.2], rho=np.eye(2), horizon=3.0
    )


@pytest.fixture(scope="session")
def benchmark_dates():
    return benchmark_option_portfolio().union_dates


@pytest.fixture(scope="session")
def grid9(benchmark_dates):
    return market.make_grid(benchmark_dates, monitor_steps=4)


@pytest.fixture(scope="session")
def batch_small(params2d, grid9):
    return market.simulate_paths(params2d, grid9, 2**14, seed=101)


@pytest.fixture(scope="session")
def oracle_refs():
    return json.loads((FIXTURES / "oracle_refs.json").read_text())


@pytest.fixture()
def tiny_schedule():
    return nn.TrainSchedule(batch_size=1024, n_batches=60, lr_start=1e-2, lr_end=1e-4, decay_every=20)
