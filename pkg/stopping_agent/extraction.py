"""Read a boundary off a stopping region.

For eta = +1, f(t, xi) = min{a in a_grid : A^{-1}(xi, a) in S_t}, +inf when
no level up to the top of a_grid is a member. For eta = -1 the largest member
level is used instead, 0 when there is none.
"""
import logging
from typing import Callable, Sequence

import numpy as np

from market_env.coordinates import CoordinateSystem, Orientation, as_orientation
from market_env.utils import BoolArray, FloatArray
from stopping_agent.boundary import InterpolationMode, TabularBoundary, XiGrid

logger = logging.getLogger("logger")

RegionMember = Callable[[float, FloatArray], BoolArray]


def extract_boundary(
    region_member: RegionMember,
    cs: CoordinateSystem,
    xi_grid: XiGrid,
    a_grid: FloatArray,
    dates: Sequence[float],
    eta: int = 1,
    branch: int = 1,
    mode: InterpolationMode = "nearest",
) -> TabularBoundary:
    """region_member(t, x) answers membership for a batch of states (N, m).

    Grid nodes are projected onto E first. The a = 0 level maps to the
    origin, so predicates must accept zero states.
    """
    levels = np.asarray(a_grid, dtype=np.float64)
    if levels.ndim != 1 or levels.size < 1:
        raise ValueError("a_grid must be a non-empty 1-d array")
    if np.any(levels < 0) or np.any(np.diff(levels) <= 0):
        raise ValueError("a_grid must be nonnegative and strictly increasing")
    orientation = as_orientation(eta)
    nodes = cs.project(xi_grid.nodes())
    n_nodes, n_levels = nodes.shape[0], levels.size
    xi_rep = np.repeat(nodes, n_levels, axis=0)
    a_rep = np.tile(levels, n_nodes)
    states = cs.a_inverse(xi_rep, a_rep, branch)

    rows = []
    for t in dates:
        member = np.asarray(region_member(float(t), states), dtype=bool)
        member = member.reshape(n_nodes, n_levels)
        found = member.any(axis=1)
        if orientation == Orientation.EPIGRAPH:
            first = member.argmax(axis=1)
            row = np.where(found, levels[first], np.inf)
        else:
            last = n_levels - 1 - member[:, ::-1].argmax(axis=1)
            row = np.where(found, levels[last], 0.0)
        rows.append(row)
        logger.debug(
            f"[Extract] t={t:.4f} members at {int(found.sum())}/{n_nodes} "
            f"nodes"
        )
    table = np.stack(rows).reshape((len(dates),) + xi_grid.shape)
    return TabularBoundary(tuple(float(t) for t in dates), xi_grid, table, mode)
