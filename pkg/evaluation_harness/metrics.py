"""Distances between boundaries and the empirical modulus of alpha(X_t).

Gap convention for boundary values: two +inf entries are at distance 0,
a single +inf entry is at distance +inf.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import numpy.typing as npt
import pandas as pd
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

from market_env.utils import BoolArray, FloatArray, Real
from stopping_agent.boundary import Boundary, XiGrid

logger = logging.getLogger("logger")

BALL_TOL = 1e-12
MIN_MODULUS_SAMPLES = 1000
MAX_EXHAUSTIVE_MAPS = 1 << 22
CHUNK_ROWS = 1024


class CapTooSmallError(ValueError):
    pass


def boundary_gap(h: npt.ArrayLike, h_other: npt.ArrayLike) -> FloatArray:
    a = np.asarray(h, dtype=np.float64)
    b = np.asarray(h_other, dtype=np.float64)
    both = np.isinf(a) & np.isinf(b)
    with np.errstate(invalid="ignore"):
        gap = np.abs(a - b)
    return np.where(both, 0.0, np.where(np.isinf(a) | np.isinf(b), np.inf, gap))


def boundary_table(
    f: Boundary, dates: Sequence[float], xi_grid: XiGrid
) -> FloatArray:
    """f on dates x K as a (len(dates), n_nodes) array"""
    nodes = xi_grid.nodes()
    return np.stack([f(float(t), nodes) for t in dates])


def sup_distance(
    f: Boundary, f_other: Boundary, dates: Sequence[float], xi_grid: XiGrid
) -> float:
    gap = boundary_gap(
        boundary_table(f, dates, xi_grid),
        boundary_table(f_other, dates, xi_grid),
    )
    return float(gap.max())


@dataclass(frozen=True)
class RelaxedDistanceProfile:
    r_values: tuple[float, ...]
    distances: tuple[float, ...]

    @property
    def sup_value(self) -> float:
        """The distance at the smallest radius"""
        return self.distances[-1]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"r": self.r_values, "value": self.distances})


def _check_radii(r_list: Sequence[float]) -> tuple[float, ...]:
    radii = tuple(float(r) for r in r_list)
    if not radii:
        raise ValueError("The r-list is empty")
    if any(r < 0 for r in radii):
        raise ValueError(f"Radii must be nonnegative, got {radii}")
    if any(b >= a for a, b in zip(radii[:-1], radii[1:])):
        raise ValueError(f"Radii must be strictly decreasing, got {radii}")
    return radii


def _ball_min(gap: FloatArray, nodes: FloatArray, r: float) -> FloatArray:
    """min of gap over the closed ball B_r(xi) intersected with K, per node"""
    out = np.empty(gap.size)
    for start in range(0, gap.size, CHUNK_ROWS):
        stop = min(start + CHUNK_ROWS, gap.size)
        inside = cdist(nodes[start:stop], nodes) <= r + BALL_TOL
        out[start:stop] = np.where(inside, gap[None, :], np.inf).min(axis=1)
    return out


def relaxed_linf_profile(
    h: npt.ArrayLike,
    h_other: npt.ArrayLike,
    xi_grid: XiGrid,
    r_list: Sequence[float],
) -> RelaxedDistanceProfile:
    """inf over maps psi with |psi(xi) - xi| <= r of sup |h - h'| o psi.

    The maps carry no coupling between nodes, so the infimum decomposes into
    max_xi min_{zeta in B_r(xi)} |h - h'|(zeta). h and h_other are node
    values of one date in XiGrid.nodes() order.
    """
    radii = _check_radii(r_list)
    gap = boundary_gap(h, h_other).ravel()
    nodes = xi_grid.nodes()
    if gap.size != nodes.shape[0]:
        raise ValueError(
            f"Got {gap.size} node values for a grid of {nodes.shape[0]} nodes"
        )
    distances = tuple(float(_ball_min(gap, nodes, r).max()) for r in radii)
    return RelaxedDistanceProfile(radii, distances)


def relaxed_linf_exhaustive(
    h: npt.ArrayLike, h_other: npt.ArrayLike, xi_grid: XiGrid, r: Real
) -> float:
    """The same infimum by enumerating every ball-constrained grid map"""
    gap = boundary_gap(h, h_other).ravel()
    nodes = xi_grid.nodes()
    inside = cdist(nodes, nodes) <= float(r) + BALL_TOL
    candidates = [np.flatnonzero(row) for row in inside]
    n_maps = int(np.prod([c.size for c in candidates], dtype=np.float64))
    if n_maps > MAX_EXHAUSTIVE_MAPS:
        raise ValueError(
            f"{n_maps} maps exceed the enumeration limit {MAX_EXHAUSTIVE_MAPS}"
        )
    best = np.inf
    for psi in itertools.product(*candidates):
        best = min(best, float(gap[list(psi)].max()))
    return best


def relaxed_linf_tk(
    f: Boundary,
    f_other: Boundary,
    dates: Sequence[float],
    xi_grid: XiGrid,
    r_list: Sequence[float],
) -> RelaxedDistanceProfile:
    """Per radius, the largest per-date profile value"""
    radii = _check_radii(r_list)
    table = boundary_table(f, dates, xi_grid)
    other = boundary_table(f_other, dates, xi_grid)
    per_date = np.array(
        [
            relaxed_linf_profile(table[k], other[k], xi_grid, radii).distances
            for k in range(len(dates))
        ]
    )
    return RelaxedDistanceProfile(radii, tuple(per_date.max(axis=0).tolist()))


@dataclass(frozen=True)
class EpigraphGrid:
    """masks[k, n, j] = (a_grid[j] >= f(t_k, xi_n))"""

    xi_grid: XiGrid
    a_grid: FloatArray
    masks: BoolArray

    def is_upward_closed(self) -> bool:
        # once a member, every higher level is a member
        return bool(np.all(np.diff(self.masks.astype(np.int8), axis=-1) >= 0))

    def points(self, k: int) -> FloatArray:
        """(xi, a) coordinates of the member cells at date k"""
        n_idx, a_idx = np.nonzero(self.masks[k])
        return np.concatenate(
            [self.xi_grid.nodes()[n_idx], self.a_grid[a_idx, None]], axis=1
        )


def a_levels(a_cap: Real, a_step: Real) -> FloatArray:
    if not a_cap > 0 or not a_step > 0:
        raise ValueError(f"a_cap and a_step must be positive ({a_cap}, {a_step})")
    n = int(np.floor(float(a_cap) / float(a_step) + 1e-9)) + 1
    return np.arange(n) * float(a_step)


def epigraph_grid(
    f: Boundary, dates: Sequence[float], xi_grid: XiGrid, a_grid: FloatArray
) -> EpigraphGrid:
    table = boundary_table(f, dates, xi_grid)
    masks = a_grid[None, None, :] >= table[:, :, None]
    return EpigraphGrid(xi_grid, a_grid, masks)


def hausdorff_epigraph(
    f: Boundary,
    f_other: Boundary,
    t: Real,
    xi_grid: XiGrid,
    a_cap: Real,
    a_step: Real | None = None,
) -> float:
    """Hausdorff distance between the epigraphs of f(t, .) and f'(t, .)
    truncated to K x [0, a_cap], under the Chebyshev metric"""
    step = xi_grid.step if a_step is None else float(a_step)
    if step <= 0:
        raise ValueError("a_step is required for a single-node latent grid")
    nodes = xi_grid.nodes()
    h = f(float(t), nodes)
    h_other = f_other(float(t), nodes)
    for this, that in ((h, h_other), (h_other, h)):
        over = np.isfinite(this) & (this > a_cap) & np.isfinite(that)
        if np.any(over):
            raise CapTooSmallError(
                f"Boundary value {this[over].max():.6g} exceeds a_cap={a_cap}"
            )
    grid = a_levels(a_cap, step)
    epi = EpigraphGrid(
        xi_grid,
        grid,
        np.stack([grid[None, :] >= h[:, None], grid[None, :] >= h_other[:, None]]),
    )
    left, right = epi.points(0), epi.points(1)
    if left.shape[0] == 0 and right.shape[0] == 0:
        return 0.0
    if left.shape[0] == 0 or right.shape[0] == 0:
        return float(np.inf)
    d_lr = cKDTree(right).query(left, p=np.inf)[0].max()
    d_rl = cKDTree(left).query(right, p=np.inf)[0].max()
    return float(max(d_lr, d_rl))


@dataclass(frozen=True)
class ModulusTable:
    iotas: tuple[float, ...]
    # per_date[i, k] = rho_k(iota_i)
    per_date: FloatArray
    dates: tuple[float, ...]

    @property
    def total(self) -> FloatArray:
        return np.asarray(self.per_date.sum(axis=1))

    def at(self, iota: float) -> FloatArray:
        i = self.iotas.index(float(iota))
        return np.asarray(self.per_date[i])

    def to_frame(self) -> pd.DataFrame:
        rows = [
            {"iota": iota, "t": t, "rho": float(self.per_date[i, k])}
            for i, iota in enumerate(self.iotas)
            for k, t in enumerate(self.dates)
        ]
        return pd.DataFrame(rows)


def _modulus(sorted_x: FloatArray, iota: float) -> float:
    if iota == 0:
        return 0.0
    n = sorted_x.size
    counts = np.searchsorted(sorted_x, sorted_x + iota, side="right") - np.arange(n)
    return float(counts.max() / n)


def empirical_modulus(
    samples: npt.ArrayLike,
    iotas: Sequence[float],
    dates: Sequence[float] | None = None,
) -> ModulusTable:
    """max_a F_t(a + iota) - F_t(a) from the empirical CDF of each date.

    samples has shape (N, K): N draws of alpha(X_t) at each of K dates.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] < MIN_MODULUS_SAMPLES:
        raise ValueError(
            f"Need at least {MIN_MODULUS_SAMPLES} samples per date, got "
            f"{x.shape[0]}"
        )
    if any(i < 0 for i in iotas):
        raise ValueError(f"iota must be nonnegative, got {list(iotas)}")
    cols = [np.sort(x[:, k]) for k in range(x.shape[1])]
    table = np.array([[_modulus(c, float(i)) for c in cols] for i in iotas])
    labels = tuple(float(t) for t in dates) if dates is not None else tuple(
        float(k) for k in range(x.shape[1])
    )
    return ModulusTable(tuple(float(i) for i in iotas), table, labels)
