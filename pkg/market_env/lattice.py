"""Recombining Cox-Ross-Rubinstein lattice for independent assets.

Each grid interval is split into ``steps_per_interval`` steps of length dt.
Asset i moves by up_i = exp(vol_i sqrt(dt)) or down_i = 1 / up_i with the
risk-neutral probability prob_i, so that
prob_i up_i + (1 - prob_i) down_i = exp((r - q_i) dt). Assets with zero
volatility get a single branch growing deterministically.

The node tensor at step n has one axis per asset; entry j along axis i is
the state reached after j up-moves of asset i.
"""
import logging
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt
from beartype import beartype

from market_env.constants import (
    MARTINGALE_TOL,
    MAX_LATTICE_ASSETS,
    MAX_LATTICE_NODES,
)
from market_env.market import MarketParams, TimeGrid
from market_env.utils import FloatArray, IntArray, as_state_array

logger = logging.getLogger("logger")


class LatticeError(ValueError):
    pass


@dataclass(frozen=True)
class Lattice:
    params: MarketParams
    grid: TimeGrid
    steps_per_interval: int
    dt: float
    up: FloatArray
    down: FloatArray
    prob: FloatArray

    @property
    def n_assets(self) -> int:
        return self.params.n_assets

    @property
    def n_steps(self) -> int:
        return (len(self.grid) - 1) * self.steps_per_interval

    @property
    def branching(self) -> npt.NDArray[np.bool_]:
        # a single-date grid has no steps, so nothing branches
        return (np.asarray(self.params.vol) > 0) & (self.dt > 0)

    def date_step(self, k: int) -> int:
        return k * self.steps_per_interval

    def step_time(self, n: int) -> float:
        return n * self.dt

    def axis_width(self, n: int) -> tuple[int, ...]:
        return tuple(
            n + 1 if branch else 1 for branch in self.branching.tolist()
        )

    def asset_levels(self, n: int, i: int) -> FloatArray:
        x0 = self.params.spot[i]
        if not self.branching[i]:
            return np.array([x0 * self.up[i] ** n])
        j = np.arange(n + 1, dtype=np.float64)
        return x0 * self.up[i] ** j * self.down[i] ** (n - j)

    def states_at_step(self, n: int) -> FloatArray:
        """Node states at step n, shape axis_width(n) + (m,)"""
        levels = [self.asset_levels(n, i) for i in range(self.n_assets)]
        mesh = np.meshgrid(*levels, indexing="ij")
        return np.stack(mesh, axis=-1)

    def expectation(self, values: FloatArray) -> FloatArray:
        """One-step conditional expectation of node values at step n + 1,
        returned on the nodes of step n"""
        out = values
        for i in range(self.n_assets):
            if not self.branching[i]:
                continue
            upper = np.take(out, np.arange(1, out.shape[i]), axis=i)
            lower = np.take(out, np.arange(0, out.shape[i] - 1), axis=i)
            out = self.prob[i] * upper + (1.0 - self.prob[i]) * lower
        return out

    def nearest_node(self, n: int, x: npt.ArrayLike) -> IntArray:
        """Multi-index (N, m) of the node at step n closest in log-price"""
        states = as_state_array(x, self.n_assets)
        index = np.zeros(states.shape, dtype=np.int64)
        for i in range(self.n_assets):
            if not self.branching[i]:
                continue
            log_x = np.log(np.maximum(states[:, i], 1e-300))
            log_base = np.log(self.params.spot[i]) + n * np.log(self.down[i])
            step = np.log(self.up[i]) - np.log(self.down[i])
            j = np.rint((log_x - log_base) / step)
            index[:, i] = np.clip(j, 0, n).astype(np.int64)
        return index

    def martingale_residual(self) -> float:
        """Largest relative one-step martingale error of exp(-(r-q)t) X over
        the nodes of every exercise date"""
        growth = np.exp(
            (self.params.rate - np.asarray(self.params.dividend)) * self.dt
        )
        worst = 0.0
        for k in range(len(self.grid) - 1):
            n = self.date_step(k)
            for i in range(self.n_assets):
                s = self.asset_levels(n, i)
                if self.branching[i]:
                    mean = self.prob[i] * s * self.up[i] + (
                        1.0 - self.prob[i]
                    ) * s * self.down[i]
                else:
                    mean = s * self.up[i]
                resid = np.abs(mean / growth[i] - s) / s
                worst = max(worst, float(resid.max()))
        return worst


@beartype
def build_lattice(
    params: MarketParams, grid: TimeGrid, steps_per_interval: int
) -> Lattice:
    m = params.n_assets
    if m > MAX_LATTICE_ASSETS:
        raise LatticeError(
            f"Lattice supports at most {MAX_LATTICE_ASSETS} assets, got {m}"
        )
    if m > 1 and not params.is_independent:
        raise LatticeError(
            "Correlated multi-asset lattices are not supported; use "
            "independent assets or m = 1"
        )
    if steps_per_interval < 1:
        raise LatticeError(
            f"steps_per_interval must be >= 1, got {steps_per_interval}"
        )
    if len(grid) > 1:
        gaps = grid.increments()
        if np.max(np.abs(gaps - gaps[0])) > 1e-12 * max(1.0, grid.horizon):
            raise LatticeError("The lattice needs an equally spaced grid")
        dt = float(gaps[0]) / steps_per_interval
    else:
        dt = 0.0

    n_total = (len(grid) - 1) * steps_per_interval
    n_nodes = int(
        np.prod([n_total + 1 if v > 0 else 1 for v in params.vol])
    )
    if n_nodes > MAX_LATTICE_NODES:
        raise LatticeError(
            f"Lattice would hold {n_nodes} nodes at maturity "
            f"(limit {MAX_LATTICE_NODES}); reduce steps_per_interval"
        )

    vol = np.asarray(params.vol, dtype=np.float64)
    moves = (vol > 0) & (dt > 0)
    growth = np.exp((params.rate - np.asarray(params.dividend)) * dt)
    up = np.where(moves, np.exp(vol * np.sqrt(dt)), growth)
    down = np.where(moves, 1.0 / up, growth)
    with np.errstate(divide="ignore", invalid="ignore"):
        prob = np.where(moves, (growth - down) / (up - down), 1.0)
    if np.any((prob < 0) | (prob > 1)):
        raise LatticeError(
            f"Negative CRR probability {prob}; increase steps_per_interval"
        )

    lattice = Lattice(
        params=params,
        grid=grid,
        steps_per_interval=steps_per_interval,
        dt=dt,
        up=up,
        down=down,
        prob=prob,
    )
    resid = lattice.martingale_residual()
    if resid > MARTINGALE_TOL:
        raise LatticeError(f"Martingale check failed (residual {resid:.3e})")
    logger.debug(
        f"[Lattice] m={m} steps={n_total} dt={dt:.3e} nodes={n_nodes}"
    )
    return lattice
