import numpy as np
import pytest

from stopping_agent import (
    AnalyticBoundary,
    ConstantBoundary,
    XiGrid,
    inf_convolution,
    inf_convolve_values,
    sup_convolution,
    sup_convolve_values,
)


@pytest.fixture
def line() -> np.ndarray:
    return np.linspace(-1.0, 1.0, 2001)[:, None]


def _abs_envelope(x: np.ndarray, delta: float) -> np.ndarray:
    """min_y |y| + (y - x)^2 / delta over the real line"""
    ax = np.abs(x)
    return np.where(ax <= delta / 2, ax**2 / delta, ax - delta / 4)


@pytest.mark.parametrize("delta", [0.1, 0.5, 1.0])
def test_absolute_value_in_closed_form(line: np.ndarray, delta: float) -> None:
    env, _ = inf_convolve_values(np.abs(line[:, 0]), line, delta)
    step = 2.0 / 2000
    np.testing.assert_allclose(
        env, _abs_envelope(line[:, 0], delta), atol=2 * step
    )


def test_constant_is_a_fixed_point() -> None:
    grid = XiGrid.box([0.0, 0.0], [1.0, 1.0], [6, 6])
    res = inf_convolution(ConstantBoundary(120.0), 0.3, grid, (0.0, 1.0))
    np.testing.assert_allclose(res.boundary.table, 120.0)
    res = sup_convolution(ConstantBoundary(120.0), 0.3, grid, (0.0,))
    np.testing.assert_allclose(res.boundary.table, 120.0)
    np.testing.assert_allclose(res.minimizers[0], grid.nodes())


def test_envelopes_sandwich_and_order(rng: np.random.Generator) -> None:
    nodes = XiGrid.box([0.0, 0.0], [1.0, 1.0], [9, 9]).nodes()
    values = rng.uniform(80.0, 140.0, nodes.shape[0])
    previous = -np.inf
    for delta in [1.0, 0.1, 0.01, 1e-9]:
        low, _ = inf_convolve_values(values, nodes, delta)
        high, _ = sup_convolve_values(values, nodes, delta)
        assert np.all(low <= values) and np.all(high >= values)
        assert np.all(low >= previous)
        previous = low
    # for tiny delta no other node can compete
    np.testing.assert_array_equal(previous, values)


def test_minimizers_stay_local(rng: np.random.Generator) -> None:
    nodes = XiGrid.box([0.0, 0.0], [1.0, 1.0], [11, 11]).nodes()
    values = rng.uniform(0.0, 1.0, nodes.shape[0])
    delta = 0.05
    _, arg = inf_convolve_values(values, nodes, delta)
    dist = np.linalg.norm(nodes[arg] - nodes, axis=1)
    radius = np.sqrt(delta * (values - values.min()))
    assert np.all(dist <= radius + 1e-12)


def test_sup_is_the_mirror_of_inf(rng: np.random.Generator) -> None:
    nodes = XiGrid.box([0.0, 0.0], [1.0, 1.0], [7, 5]).nodes()
    values = rng.uniform(80.0, 140.0, nodes.shape[0])
    level = 200.0
    high, _ = sup_convolve_values(level - values, nodes, 0.2)
    low, _ = inf_convolve_values(values, nodes, 0.2)
    np.testing.assert_allclose(high, level - low)


@pytest.mark.parametrize("delta", [0.01, 0.2, 2.0])
def test_pruning_matches_the_full_scan(
    rng: np.random.Generator, delta: float
) -> None:
    nodes = XiGrid.box([0.0, 0.0], [1.0, 1.0], [15, 15]).nodes()
    values = rng.uniform(0.0, 3.0, nodes.shape[0])
    values[rng.choice(values.size, 10, replace=False)] = np.inf
    full, full_arg = inf_convolve_values(values, nodes, delta)
    pruned, pruned_arg = inf_convolve_values(values, nodes, delta, prune=True)
    np.testing.assert_allclose(pruned, full, rtol=0, atol=1e-12)
    np.testing.assert_array_equal(pruned_arg, full_arg)


def test_infinite_values() -> None:
    nodes = np.array([[0.0], [0.5], [1.0]])
    values = np.array([np.inf, 1.0, np.inf])
    low, arg = inf_convolve_values(values, nodes, 1.0)
    np.testing.assert_allclose(low, [1.25, 1.0, 1.25])
    np.testing.assert_array_equal(arg, [1, 1, 1])
    high, _ = sup_convolve_values(values, nodes, 1.0)
    assert np.all(np.isposinf(high))
    with pytest.raises(ValueError):
        inf_convolve_values(np.full(3, np.inf), nodes, 1.0)
    with pytest.raises(ValueError):
        inf_convolve_values(values, nodes, 0.0)


def test_boundary_convolution_on_dates() -> None:
    grid = XiGrid.uniform(0.0, 1.0, 11)
    f = AnalyticBoundary(lambda t, xi: 100.0 + 10.0 * t + 0.0 * xi[:, 0])
    res = inf_convolution(f, 0.5, grid, (0.0, 0.5))
    assert res.boundary.table.shape == (2, 11)
    assert res.minimizers.shape == (2, 11, 1)
    np.testing.assert_allclose(res.boundary.table[1], 105.0)
