"""Discounted call-type rewards phi(t, x) = exp(-r t) (stat(x) - strike)^+"""
from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
import numpy.typing as npt
from beartype import beartype

from market_env.constants import PAYOFF_KINDS, PayoffKind
from market_env.utils import FloatArray, Real, as_state_array

if TYPE_CHECKING:
    from market_env.coordinates import CoordinateSystem


@dataclass(frozen=True)
class Payoff:
    kind: PayoffKind
    strike: float
    rate: float

    def __post_init__(self) -> None:
        if self.kind not in PAYOFF_KINDS:
            raise ValueError(f"Unknown payoff kind {self.kind}")
        if self.strike <= 0:
            raise ValueError(f"strike must be positive, got {self.strike}")

    def statistic(
        self, x: npt.ArrayLike, cs: CoordinateSystem | None = None
    ) -> FloatArray:
        """alpha(x) for a batch of states of shape (N, m)"""
        states = as_state_array(x)
        match self.kind:
            case "max_call":
                return states.max(axis=1)
            case "min_call":
                return states.min(axis=1)
            case "custom_stat":
                if cs is None:
                    raise ValueError(
                        "custom_stat payoffs take the statistic from a "
                        "coordinate system"
                    )
                return cs.alpha(states)
            case _:
                raise ValueError(f"Unknown payoff kind {self.kind}")


def payoff_eval(
    payoff: Payoff, stat: npt.ArrayLike, t: npt.ArrayLike
) -> FloatArray:
    t_arr = np.asarray(t, dtype=np.float64)
    if np.any(t_arr < 0):
        raise ValueError(f"t must be nonnegative, got {t}")
    stat_arr = np.asarray(stat, dtype=np.float64)
    return np.exp(-payoff.rate * t_arr) * np.maximum(
        stat_arr - payoff.strike, 0.0
    )


def reward(
    payoff: Payoff,
    x: npt.ArrayLike,
    t: npt.ArrayLike,
    cs: CoordinateSystem | None = None,
) -> FloatArray:
    return payoff_eval(payoff, payoff.statistic(x, cs), t)


def path_rewards(
    payoff: Payoff,
    values: FloatArray,
    dates: FloatArray,
    cs: CoordinateSystem | None = None,
) -> FloatArray:
    """phi(t_k, X_{t_k}) for every path and date, shape (B, K)"""
    n_paths, n_dates, n_assets = values.shape
    stat = payoff.statistic(values.reshape(-1, n_assets), cs).reshape(
        n_paths, n_dates
    )
    return payoff_eval(payoff, stat, dates[None, :])


@beartype
def make_payoff(kind: PayoffKind, strike: Real, rate: Real) -> Payoff:
    return Payoff(kind=kind, strike=float(strike), rate=float(rate))
