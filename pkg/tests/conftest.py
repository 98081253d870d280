
import numpy as np
import pytest

from market_env import (
    CoordinateSystem,
    MarketParams,
    PathBatch,
    Payoff,
    TimeGrid,
    build_time_grid,
    make_payoff,
    simulate_paths,
)



@pytest.fixture(scope="session")
def desk_params() -> MarketParams:
    """1-asset Bermudan call desk market: r=5%, q=10%, vol=20%"""
    return MarketParams.symmetric(1, 100.0, 0.05, 0.10, 0.2)


@pytest.fixture(scope="session")
def desk_grid() -> TimeGrid:
    return build_time_grid(1.0, 10)


@pytest.fixture(scope="session")
def call_payoff() -> Payoff:
    return make_payoff("max_call", 100.0, 0.05)


@pytest.fixture(scope="session")
def cs_1d() -> CoordinateSystem:
    return CoordinateSystem("max_call_coords", 1)


@pytest.fixture(scope="session")
def cs_2d() -> CoordinateSystem:
    return CoordinateSystem("max_call_coords", 2)


@pytest.fixture(scope="session")
def desk_paths(desk_params: MarketParams, desk_grid: TimeGrid) -> PathBatch:
    return simulate_paths(desk_params, desk_grid, 10_000, seed=1)


@pytest.fixture(scope="function")
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)
