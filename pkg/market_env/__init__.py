from .coordinates import (
    CoordinateError,
    CoordinateSystem,
    Orientation,
    a_inverse,
    alpha,
    as_orientation,
    xi,
)
from .envs import CONTINUE, STOP, StoppingEnv
from .lattice import Lattice, LatticeError, build_lattice
from .market import (
    MarketParams,
    MarketParamsError,
    PathBatch,
    TimeGrid,
    build_time_grid,
    simulate_paths,
)
from .payoffs import Payoff, make_payoff, path_rewards, payoff_eval, reward

__all__ = [
    "CoordinateError",
    "CoordinateSystem",
    "Orientation",
    "a_inverse",
    "alpha",
    "as_orientation",
    "xi",
    "CONTINUE",
    "STOP",
    "StoppingEnv",
    "Lattice",
    "LatticeError",
    "build_lattice",
    "MarketParams",
    "MarketParamsError",
    "PathBatch",
    "TimeGrid",
    "build_time_grid",
    "simulate_paths",
    "Payoff",
    "make_payoff",
    "path_rewards",
    "payoff_eval",
    "reward",
]
