import numpy as np
import pytest

from market_env import (
    CoordinateSystem,
    MarketParams,
    PathBatch,
    Payoff,
    TimeGrid,
    simulate_paths,
)
from stopping_agent import MlpBoundary, init_mlp, value_relaxed
from stopping_agent.mlp import inverse_softplus
from trainer import grad_relaxed_value

EPS = 5.0


@pytest.fixture(scope="module")
def net() -> MlpBoundary:
    return init_mlp(
        1, hidden=(8, 8), seed=3, output_scale=100.0, init_level=112.0
    )


def _near_kink(
    net: MlpBoundary,
    paths_values: np.ndarray,
    grid: TimeGrid,
    cs: CoordinateSystem,
    tol: float = 1e-3,
) -> bool:
    n_paths, n_dates, n_assets = paths_values.shape
    flat = paths_values.reshape(-1, n_assets)
    t = np.tile(grid.as_array(), n_paths)
    diff = (net(t, cs.xi(flat)) - cs.alpha(flat)).reshape(n_paths, n_dates)
    # the last date is forced and carries no kink
    diff = diff[:, :-1]
    return bool(
        np.any(np.abs(diff) < tol) or np.any(np.abs(np.abs(diff) - EPS) < tol)
    )


@pytest.mark.parametrize("eta", [1, -1])
def test_gradient_matches_finite_differences(
    net: MlpBoundary,
    desk_params: MarketParams,
    desk_grid: TimeGrid,
    call_payoff: Payoff,
    cs_1d: CoordinateSystem,
    eta: int,
) -> None:
    h = 1e-6
    checked = 0
    for draw in range(10):
        rng = np.random.default_rng(draw)
        paths = simulate_paths(desk_params, desk_grid, 32, seed=100 + draw)
        theta = net.theta + 0.1 * rng.standard_normal(net.n_params)
        candidate = net.with_theta(theta)
        if _near_kink(candidate, paths.values, desk_grid, cs_1d):
            continue
        analytic = grad_relaxed_value(
            candidate, paths, EPS, call_payoff, cs_1d, eta
        ).grad
        numeric = np.empty(net.n_params)
        for i in range(net.n_params):
            bump = np.zeros(net.n_params)
            bump[i] = h
            up = grad_relaxed_value(
                net.with_theta(theta + bump),
                paths,
                EPS,
                call_payoff,
                cs_1d,
                eta,
            ).value
            down = grad_relaxed_value(
                net.with_theta(theta - bump),
                paths,
                EPS,
                call_payoff,
                cs_1d,
                eta,
            ).value
            numeric[i] = (up - down) / (2 * h)
        # relative error per coordinate, floored for coordinates near zero
        scale = np.maximum(np.abs(analytic), 1e-3)
        assert np.max(np.abs(numeric - analytic) / scale) < 1e-4
        checked += 1
    assert checked >= 5


def test_value_matches_the_relaxed_estimate(
    net: MlpBoundary,
    desk_paths: PathBatch,
    call_payoff: Payoff,
    cs_1d: CoordinateSystem,
) -> None:
    step = grad_relaxed_value(net, desk_paths, EPS, call_payoff, cs_1d)
    est = value_relaxed(net, EPS, desk_paths, call_payoff, cs_1d)
    assert step.value == pytest.approx(est.mean, rel=1e-12)
    assert step.path_values.shape == (desk_paths.n_paths,)
    assert step.grad.shape == (net.n_params,)


def test_no_band_means_no_gradient(
    desk_params: MarketParams,
    desk_grid: TimeGrid,
    call_payoff: Payoff,
    cs_1d: CoordinateSystem,
) -> None:
    far = init_mlp(1, hidden=(4,), output_scale=100.0, init_level=1e6)
    paths = simulate_paths(desk_params, desk_grid, 256, seed=0)
    step = grad_relaxed_value(far, paths, 0.05, call_payoff, cs_1d)
    assert np.all(step.grad == 0.0)


def test_raising_the_boundary_delays_stopping(
    desk_params: MarketParams,
    desk_grid: TimeGrid,
    call_payoff: Payoff,
    cs_1d: CoordinateSystem,
) -> None:
    """A flat boundary at 105 whose output bias lifts it everywhere"""
    bias = inverse_softplus(1.05)
    net = MlpBoundary((2, 1), np.array([0.0, 0.0, bias]), output_scale=100.0)
    paths = simulate_paths(desk_params, desk_grid, 4096, seed=0)
    step = grad_relaxed_value(net, paths, EPS, call_payoff, cs_1d)
    # too low a boundary exercises early; raising it pays off
    assert step.grad[-1] > 0
