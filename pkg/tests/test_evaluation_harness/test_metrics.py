import numpy as np
import pytest

from evaluation_harness import (
    CapTooSmallError,
    empirical_modulus,
    epigraph_grid,
    hausdorff_epigraph,
    relaxed_linf_exhaustive,
    relaxed_linf_profile,
    relaxed_linf_tk,
    sup_distance,
)
from evaluation_harness.metrics import a_levels
from stopping_agent import (
    AnalyticBoundary,
    ConstantBoundary,
    TabularBoundary,
    XiGrid,
    inf_convolution,
)

COARSE = XiGrid.uniform(0.0, 1.0, 11)
FINE = XiGrid.uniform(0.0, 1.0, 1001)


def _step(level: float = 0.0, height: float = 1.0) -> AnalyticBoundary:
    """level on [0, 0.5], level + height on (0.5, 1]"""
    return AnalyticBoundary(
        lambda t, xi: level + height * (xi[:, 0] > 0.5 + 1e-12), "step"
    )


def test_sup_distance_examples() -> None:
    f = AnalyticBoundary(lambda t, xi: 100.0 + xi[:, 0] + t)
    g = AnalyticBoundary(lambda t, xi: 103.0 + xi[:, 0] + t)
    dates = (0.0, 0.5)
    assert sup_distance(f, f, dates, COARSE) == 0.0
    assert sup_distance(f, g, dates, COARSE) == pytest.approx(3.0)
    table = np.full((1, 11), 100.0)
    table[0, 4] = np.inf
    spiky = TabularBoundary((0.0,), COARSE, table)
    assert sup_distance(ConstantBoundary(100.0), spiky, (0.0,), COARSE) == (
        np.inf
    )
    assert sup_distance(spiky, spiky, (0.0,), COARSE) == 0.0


def test_profile_examples(rng: np.random.Generator) -> None:
    h = rng.uniform(0.0, 5.0, 11)
    r_list = [0.5, 0.2, 0.1, 0.0]
    same = relaxed_linf_profile(h, h, COARSE, r_list)
    assert same.distances == (0.0,) * 4
    shifted = relaxed_linf_profile(h, h - 2.5, COARSE, r_list)
    np.testing.assert_allclose(shifted.distances, 2.5)
    assert shifted.sup_value == pytest.approx(2.5)


def test_step_profile_switches_at_half() -> None:
    nodes = FINE.nodes()
    h = _step()(0.0, nodes)
    zero = np.zeros_like(h)
    r_list = [0.6, 0.5, 0.5 - 1e-3, 0.3]
    profile = relaxed_linf_profile(h, zero, FINE, r_list)
    assert profile.distances == (0.0, 0.0, 1.0, 1.0)
    frame = profile.to_frame()
    assert list(frame.columns) == ["r", "value"]


@pytest.mark.parametrize("r", [0.0, 0.05, 0.1, 0.15])
@pytest.mark.parametrize("draw", range(3))
def test_decomposition_matches_enumeration(r: float, draw: int) -> None:
    rng = np.random.default_rng(draw)
    h = rng.uniform(0.0, 3.0, 11)
    h_other = rng.uniform(0.0, 3.0, 11)
    profile = relaxed_linf_profile(h, h_other, COARSE, [r])
    assert profile.distances[0] == pytest.approx(
        relaxed_linf_exhaustive(h, h_other, COARSE, r)
    )


def test_step_decomposition_matches_enumeration() -> None:
    nodes = COARSE.nodes()
    h = _step()(0.0, nodes)
    for r in [0.15, 0.1, 0.0]:
        assert relaxed_linf_profile(
            h, np.zeros(11), COARSE, [r]
        ).distances[0] == relaxed_linf_exhaustive(h, np.zeros(11), COARSE, r)


def test_profile_is_monotone_and_dominated(rng: np.random.Generator) -> None:
    grid = XiGrid.box([0.0, 0.0], [1.0, 1.0], [12, 12])
    h = rng.uniform(90.0, 130.0, grid.n_nodes)
    h_other = rng.uniform(90.0, 130.0, grid.n_nodes)
    r_list = [0.4, 0.2, 0.1, 0.05, 0.0]
    profile = relaxed_linf_profile(h, h_other, grid, r_list)
    assert np.all(np.diff(profile.distances) >= 0)
    assert profile.sup_value == pytest.approx(np.abs(h - h_other).max())


def test_invalid_radii() -> None:
    h = np.zeros(11)
    for r_list in ([], [0.1, 0.2], [0.1, -0.1], [0.2, 0.2]):
        with pytest.raises(ValueError):
            relaxed_linf_profile(h, h, COARSE, r_list)


def test_profile_over_dates() -> None:
    f = _step(100.0)
    g = AnalyticBoundary(
        lambda t, xi: 100.0 + (t > 0.25) * (xi[:, 0] > 0.5 + 1e-12)
    )
    r_list = [0.6, 0.45]
    single = relaxed_linf_tk(f, ConstantBoundary(100.0), (0.0,), FINE, r_list)
    direct = relaxed_linf_profile(
        _step(100.0)(0.0, FINE.nodes()), np.full(1001, 100.0), FINE, r_list
    )
    assert single.distances == direct.distances
    # f and g only differ on the first date
    both = relaxed_linf_tk(f, g, (0.0, 0.5), FINE, r_list)
    assert both.distances == (0.0, 1.0)


def test_profile_to_inf_convolution_shrinks() -> None:
    grid = XiGrid.uniform(0.0, 1.0, 201)
    f = _step(100.0, 10.0)
    dates = (0.0, 1.0)
    values = []
    for delta in [1.0, 0.1, 0.01, 0.001]:
        conv = inf_convolution(f, delta, grid, dates).boundary
        values.append(relaxed_linf_tk(f, conv, dates, grid, [0.05]).sup_value)
    assert np.all(np.diff(values) <= 1e-12)
    assert values[-1] < values[0]


def test_epigraph_masks_are_upward_closed(rng: np.random.Generator) -> None:
    grid = XiGrid.box([0.0, 0.0], [1.0, 1.0], [5, 5])
    table = rng.uniform(0.0, 2.0, (2, 5, 5))
    table[0, 2, 2] = np.inf
    f = TabularBoundary((0.0, 1.0), grid, table, "nearest")
    epi = epigraph_grid(f, (0.0, 1.0), grid, a_levels(3.0, 0.25))
    assert epi.a_grid.size == 13
    assert epi.is_upward_closed()
    assert not epi.masks[0, 12].any()


def test_hausdorff_examples() -> None:
    grid = XiGrid.uniform(0.0, 1.0, 101)
    f = _step(0.0)
    assert hausdorff_epigraph(f, f, 0.0, grid, 2.0) == 0.0
    d = hausdorff_epigraph(
        ConstantBoundary(0.7), ConstantBoundary(1.2), 0.0, grid, 2.0
    )
    assert abs(d - 0.5) <= grid.step + 1e-12
    d = hausdorff_epigraph(f, ConstantBoundary(0.0), 0.0, grid, 2.0)
    assert abs(d - 0.5) <= grid.step + 1e-12
    never = ConstantBoundary(np.inf)
    assert hausdorff_epigraph(never, never, 0.0, grid, 2.0) == 0.0
    assert hausdorff_epigraph(never, f, 0.0, grid, 2.0) == np.inf


def test_hausdorff_is_a_metric(rng: np.random.Generator) -> None:
    grid = XiGrid.uniform(0.0, 1.0, 21)
    slack = 2 * grid.step
    for _ in range(100):
        f, g, h = (
            TabularBoundary(
                (0.0,), grid, rng.uniform(0.0, 1.0, (1, 21)), "nearest"
            )
            for _ in range(3)
        )
        d_fg = hausdorff_epigraph(f, g, 0.0, grid, 1.5)
        d_gf = hausdorff_epigraph(g, f, 0.0, grid, 1.5)
        d_gh = hausdorff_epigraph(g, h, 0.0, grid, 1.5)
        d_fh = hausdorff_epigraph(f, h, 0.0, grid, 1.5)
        assert d_fg == pytest.approx(d_gf)
        assert d_fh <= d_fg + d_gh + slack


def test_hausdorff_vanishes_only_on_identical_masks(
    rng: np.random.Generator,
) -> None:
    grid = XiGrid.uniform(0.0, 1.0, 21)
    levels = a_levels(1.5, grid.step)
    zeros = 0
    for _ in range(100):
        table = rng.uniform(0.0, 1.0, (1, 21))
        other = table.copy()
        if rng.uniform() < 0.5:
            # move one node by at least one level
            other[0, rng.integers(21)] += rng.uniform(0.1, 0.4)
        f = TabularBoundary((0.0,), grid, table, "nearest")
        g = TabularBoundary((0.0,), grid, other, "nearest")
        same = np.array_equal(
            epigraph_grid(f, (0.0,), grid, levels).masks,
            epigraph_grid(g, (0.0,), grid, levels).masks,
        )
        assert (hausdorff_epigraph(f, g, 0.0, grid, 1.5) == 0.0) == same
        zeros += same
    assert 0 < zeros < 100


def test_hausdorff_cap_must_cover_both() -> None:
    with pytest.raises(CapTooSmallError):
        hausdorff_epigraph(
            ConstantBoundary(3.0), ConstantBoundary(1.0), 0.0, COARSE, 2.0
        )


def test_modulus_examples(rng: np.random.Generator) -> None:
    samples = rng.uniform(0.0, 1.0, (1_000_000, 1))
    table = empirical_modulus(samples, [0.0, 0.1, 2.0], dates=[0.5])
    np.testing.assert_array_equal(table.at(0.0), [0.0])
    assert abs(table.at(0.1)[0] - 0.1) <= 0.01
    np.testing.assert_array_equal(table.at(2.0), [1.0])
    np.testing.assert_allclose(table.total, table.per_date[:, 0])
    frame = table.to_frame()
    assert list(frame.columns) == ["iota", "t", "rho"]
    with pytest.raises(ValueError):
        empirical_modulus(samples[:999], [0.1])
