"""Exact gradient of the batch relaxed value with respect to theta.

With intensities p_k = chi^eps(gap_k), survival S_k = prod_{s<k}(1 - p_s)
and tail values R_k = p_k phi_k + (1 - p_k) R_{k+1}, each path's value is
R_0 and dR_0 / dp_k = S_k (phi_k - R_{k+1}). The chain continues through
the gap into the network output and is finished by the network's own
reverse sweep.
"""
import logging
from dataclasses import dataclass

import numpy as np

from market_env.coordinates import CoordinateSystem, Orientation, as_orientation
from market_env.market import PathBatch
from market_env.payoffs import Payoff, path_rewards
from market_env.utils import FloatArray, Real
from stopping_agent.mlp import MlpBoundary, NonFiniteError
from stopping_agent.regions import (
    gap_from_levels,
    phase_indicator,
    phase_indicator_grad,
)
from stopping_agent.stopping import weights_from_intensities

logger = logging.getLogger("logger")


@dataclass(frozen=True)
class RelaxedGradient:
    value: float
    grad: FloatArray
    # per-path relaxed values, for standard errors
    path_values: FloatArray


def _first_non_finite(arr: FloatArray) -> tuple[int, int]:
    b, k = np.argwhere(~np.isfinite(arr))[0]
    return int(b), int(k)


def grad_relaxed_value(
    net: MlpBoundary,
    paths: PathBatch,
    eps: Real,
    payoff: Payoff,
    cs: CoordinateSystem,
    eta: int = 1,
    force_terminal: bool = True,
) -> RelaxedGradient:
    n_paths, n_dates, n_assets = paths.values.shape
    rewards = path_rewards(payoff, paths.values, paths.grid.as_array(), cs)
    flat = paths.values.reshape(-1, n_assets)
    t = np.tile(paths.grid.as_array(), n_paths)
    tape = net.forward(t, cs.xi(flat))
    level = tape.output.reshape(n_paths, n_dates)
    stat = cs.alpha(flat).reshape(n_paths, n_dates)
    if not np.all(np.isfinite(level)):
        b, k = _first_non_finite(level)
        raise NonFiniteError("Non-finite boundary value", path=b, date=k)

    gap = gap_from_levels(level, stat, eta)
    p = phase_indicator(gap, eps)
    dp_dgap = phase_indicator_grad(gap, eps)
    sign = 1.0 if as_orientation(eta) == Orientation.EPIGRAPH else -1.0
    dp_dlevel = sign * dp_dgap
    if force_terminal:
        p[:, -1] = 1.0
        dp_dlevel[:, -1] = 0.0

    weights = weights_from_intensities(p, force_terminal=False)
    path_values = (weights * rewards).sum(axis=1)

    survival = np.ones((n_paths, n_dates))
    survival[:, 1:] = np.cumprod(1.0 - p[:, :-1], axis=1)
    tail = np.zeros((n_paths, n_dates + 1))
    for k in range(n_dates - 1, -1, -1):
        tail[:, k] = p[:, k] * rewards[:, k] + (1.0 - p[:, k]) * tail[:, k + 1]
    dv_dp = survival * (rewards - tail[:, 1:])

    adjoint = dv_dp * dp_dlevel / n_paths
    if not np.all(np.isfinite(adjoint)):
        b, k = _first_non_finite(adjoint)
        raise NonFiniteError("Non-finite adjoint", path=b, date=k)
    grad = net.backward(tape, adjoint.ravel())
    if not np.all(np.isfinite(grad)):
        raise NonFiniteError("Non-finite parameter gradient")
    return RelaxedGradient(float(path_values.mean()), grad, path_values)
