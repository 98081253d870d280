import numpy as np
import pytest

from market_env import (
    CoordinateSystem,
    MarketParams,
    Payoff,
    TimeGrid,
)
from stopping_agent import AnalyticBoundary, XiGrid, init_mlp, tabulate
from trainer import (
    Probe,
    TrainConfig,
    certify_gamma_maximizer,
    fit_mlp_to_boundary,
    perturbation_probes,
    random_restart_probes,
)

CFG = TrainConfig(
    iterations=3,
    batch_size=512,
    eps=5.0,
    hidden=(8,),
    output_scale=100.0,
    init_level=120.0,
    seed=2,
    gamma=0.05,
)


def test_no_probes_is_vacuous(
    desk_params: MarketParams,
    desk_grid: TimeGrid,
    call_payoff: Payoff,
    cs_1d: CoordinateSystem,
) -> None:
    net = init_mlp(1, (8,), output_scale=100.0, init_level=120.0)
    report = certify_gamma_maximizer(
        net, CFG, [], desk_params, desk_grid, call_payoff, cs_1d
    )
    assert report.vacuous and report.satisfied
    assert report.trained.n == 512
    assert report.as_dict()["best_probe"] is None


def test_network_is_compared_against_probes(
    desk_params: MarketParams,
    desk_grid: TimeGrid,
    call_payoff: Payoff,
    cs_1d: CoordinateSystem,
) -> None:
    net = init_mlp(1, (8,), output_scale=100.0, init_level=120.0)
    itself = [Probe("self", net)]
    report = certify_gamma_maximizer(
        net, CFG, itself, desk_params, desk_grid, call_payoff, cs_1d
    )
    assert report.gap == pytest.approx(0.0, abs=1e-12)
    assert report.satisfied and not report.vacuous
    # stopping at date 0 of an at-the-money call pays nothing
    floor = init_mlp(1, (8,), output_scale=1e-3, init_level=1e-4)
    report = certify_gamma_maximizer(
        floor,
        CFG,
        [Probe("self", net)],
        desk_params,
        desk_grid,
        call_payoff,
        cs_1d,
    )
    assert report.best_probe == "self"
    assert not report.satisfied
    assert report.gap < -CFG.gamma


def test_probe_builders() -> None:
    net = init_mlp(1, (8,), output_scale=100.0, init_level=120.0)
    restarts = random_restart_probes(CFG, net, 3, seed=10)
    assert [p.name for p in restarts] == ["restart_0", "restart_1", "restart_2"]
    assert all(p.boundary.layer_sizes == net.layer_sizes for p in restarts)
    perturbed = perturbation_probes(net, 4, 0.1, seed=0)
    assert len(perturbed) == 4
    for probe in perturbed:
        assert probe.boundary.n_params == net.n_params
        assert not np.array_equal(probe.boundary.theta, net.theta)


def test_fit_reaches_a_smooth_boundary() -> None:
    grid = XiGrid.uniform(1.0, 1.0, 1)
    dates = tuple(np.linspace(0.0, 1.0, 10))
    target = tabulate(
        AnalyticBoundary(lambda t, xi: 140.0 - 20.0 * t), dates, grid
    )
    net = init_mlp(1, (8,), seed=0, output_scale=100.0, init_level=120.0)
    fitted = fit_mlp_to_boundary(target, net, max_iter=300)
    before = np.abs(net(np.array(dates), np.ones((10, 1))) - target.table[:, 0])
    after = np.abs(
        fitted(np.array(dates), np.ones((10, 1))) - target.table[:, 0]
    )
    assert after.max() < 1.0
    assert after.max() < before.max()


def test_fit_needs_a_finite_value() -> None:
    grid = XiGrid.uniform(1.0, 1.0, 1)
    target = tabulate(AnalyticBoundary(lambda t, xi: np.inf), (0.0,), grid)
    with pytest.raises(ValueError):
        fit_mlp_to_boundary(target, init_mlp(1, (4,)))
