import numpy as np
import pytest

from evaluation_harness import (
    dirac_tv_bound,
    empirical_modulus,
    fuzzy_mass,
    lipschitz_constant,
    relaxation_gap_bound,
)
from market_env import CoordinateSystem, PathBatch, Payoff, path_rewards
from stopping_agent import (
    ConstantBoundary,
    hitting_times,
    value_relaxed,
    value_strict,
)


def test_lipschitz_constant() -> None:
    rewards = np.array([[1.0, -1.0], [0.0, 3.0]])
    # per-path totals 2 and 3
    assert lipschitz_constant(rewards) == pytest.approx(
        2.0 * np.sqrt((4.0 + 9.0) / 2)
    )


def test_fuzzy_mass_replaces_the_first_date(rng: np.random.Generator) -> None:
    samples = np.column_stack(
        [np.full(2000, 100.0), rng.uniform(0.0, 1.0, (2000, 2))]
    )
    table = empirical_modulus(samples, [0.5])
    assert table.at(0.5)[0] == 1.0
    outside = fuzzy_mass(table, 0.5, x0_in_band=False)
    inside = fuzzy_mass(table, 0.5, x0_in_band=True)
    assert inside == pytest.approx(outside + 1.0)
    assert outside == pytest.approx(table.at(0.5)[1:].sum())


def test_dirac_tv_bound() -> None:
    assert dirac_tv_bound(2.0, [0, 1, 2, 3], [0, 1, 0, 0]) == pytest.approx(
        2.0 * np.sqrt(0.5)
    )
    with pytest.raises(ValueError):
        dirac_tv_bound(1.0, [0, 1], [0])


@pytest.mark.parametrize("eps", [5.0, 2.0, 1.0, 0.2, 0.1, 0.05])
def test_relaxation_gap_is_bounded(
    desk_paths: PathBatch,
    call_payoff: Payoff,
    cs_1d: CoordinateSystem,
    eps: float,
) -> None:
    f = ConstantBoundary(120.0)
    rewards = path_rewards(
        call_payoff, desk_paths.values, desk_paths.grid.as_array()
    )
    modulus = empirical_modulus(desk_paths.values[:, :, 0], [eps])
    bound = relaxation_gap_bound(
        lipschitz_constant(rewards), modulus, eps, x0_in_band=False
    )
    strict = value_strict(f, desk_paths, call_payoff, cs_1d)
    relaxed = value_relaxed(f, eps, desk_paths, call_payoff, cs_1d)
    assert abs(relaxed.mean - strict.mean) <= bound


def test_strict_gap_is_bounded(
    desk_paths: PathBatch, call_payoff: Payoff, cs_1d: CoordinateSystem
) -> None:
    rewards = path_rewards(
        call_payoff, desk_paths.values, desk_paths.grid.as_array()
    )
    constant = lipschitz_constant(rewards)
    tau = hitting_times(ConstantBoundary(115.0), desk_paths, cs_1d)
    tau_other = hitting_times(ConstantBoundary(125.0), desk_paths, cs_1d)
    low = value_strict(ConstantBoundary(115.0), desk_paths, call_payoff, cs_1d)
    high = value_strict(
        ConstantBoundary(125.0), desk_paths, call_payoff, cs_1d
    )
    assert abs(low.mean - high.mean) <= dirac_tv_bound(
        constant, tau, tau_other
    )
