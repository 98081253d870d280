"""Inf- and sup-convolutions of boundaries restricted to a latent grid K.

    h_delta(xi) = min_{xi' in K} h(xi') + |xi' - xi|^2 / delta
    h^delta(xi) = max_{xi' in K} h(xi') - |xi' - xi|^2 / delta

Minimisation is a brute-force scan over all grid nodes. With prune=True the
candidates for node xi are restricted to the ball of radius
sqrt(delta (h(xi) - min h)) around it, outside of which no node can beat xi
itself.
"""
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

from market_env.utils import FloatArray, IntArray, Real
from stopping_agent.boundary import Boundary, TabularBoundary, XiGrid

logger = logging.getLogger("logger")

CHUNK_ROWS = 1024


@dataclass(frozen=True)
class ConvolutionResult:
    boundary: TabularBoundary
    # minimizers[k, n] is the node achieving the optimum at date k, node n
    minimizers: FloatArray


def _check_delta(delta: Real) -> None:
    if not delta > 0:
        raise ValueError(f"delta must be positive, got {delta}")


def inf_convolve_values(
    values: FloatArray,
    nodes: FloatArray,
    delta: Real,
    prune: bool = False,
) -> tuple[FloatArray, IntArray]:
    """Inf-convolution of node values; returns (envelope, argmin node index).

    +inf entries never attain the minimum and are skipped. Ties go to the
    lowest node index.
    """
    _check_delta(delta)
    if np.any(np.isnan(values)):
        raise ValueError("Cannot convolve NaN values")
    finite = np.flatnonzero(np.isfinite(values))
    if finite.size == 0:
        raise ValueError("No finite values on K to convolve")
    n = values.size
    out = np.empty(n)
    arg = np.empty(n, dtype=np.int64)
    if not prune:
        cand_nodes = nodes[finite]
        cand_values = values[finite]
        for start in range(0, n, CHUNK_ROWS):
            stop = min(start + CHUNK_ROWS, n)
            cost = (
                cdist(nodes[start:stop], cand_nodes, "sqeuclidean") / delta
                + cand_values[None, :]
            )
            best = cost.argmin(axis=1)
            out[start:stop] = cost[np.arange(stop - start), best]
            arg[start:stop] = finite[best]
        return out, arg

    tree = cKDTree(nodes[finite])
    h_min = float(values[finite].min())
    for i in range(n):
        if np.isfinite(values[i]):
            radius = np.sqrt(delta * (values[i] - h_min))
            local = np.sort(
                np.asarray(
                    tree.query_ball_point(nodes[i], radius + 1e-12), dtype=np.int64
                )
            )
        else:
            local = np.arange(finite.size)
        cand = finite[local]
        cost = (
            np.sum((nodes[cand] - nodes[i]) ** 2, axis=1) / delta + values[cand]
        )
        best = int(cost.argmin())
        out[i] = cost[best]
        arg[i] = cand[best]
    return out, arg


def sup_convolve_values(
    values: FloatArray,
    nodes: FloatArray,
    delta: Real,
    prune: bool = False,
) -> tuple[FloatArray, IntArray]:
    """Sup-convolution of node values; returns (envelope, argmax node index).

    A single +inf entry makes the envelope +inf at every node.
    """
    _check_delta(delta)
    if np.any(np.isposinf(values)):
        logger.warning(
            "[Convolution] sup-convolution of a table holding +inf is +inf "
            "everywhere"
        )
        first = int(np.flatnonzero(np.isposinf(values))[0])
        return (
            np.full(values.size, np.inf),
            np.full(values.size, first, dtype=np.int64),
        )
    neg, arg = inf_convolve_values(-values, nodes, delta, prune)
    return -neg, arg


def _convolve(
    b: Boundary,
    delta: Real,
    xi_grid: XiGrid,
    dates: Sequence[float],
    prune: bool,
    sup: bool,
) -> ConvolutionResult:
    nodes = xi_grid.nodes()
    rows = []
    minimizers = []
    for t in dates:
        values = b(float(t), nodes)
        if sup:
            env, arg = sup_convolve_values(values, nodes, delta, prune)
        else:
            if not np.any(np.isfinite(values)):
                raise ValueError(
                    f"Boundary is +inf on all of K at t={t}; nothing to "
                    f"convolve"
                )
            env, arg = inf_convolve_values(values, nodes, delta, prune)
        rows.append(env)
        minimizers.append(nodes[arg])
    table = np.stack(rows).reshape((len(dates),) + xi_grid.shape)
    boundary = TabularBoundary(
        tuple(float(t) for t in dates), xi_grid, table, "multilinear"
    )
    return ConvolutionResult(boundary, np.stack(minimizers))


def inf_convolution(
    b: Boundary,
    delta: Real,
    xi_grid: XiGrid,
    dates: Sequence[float],
    prune: bool = False,
) -> ConvolutionResult:
    _check_delta(delta)
    return _convolve(b, delta, xi_grid, dates, prune, sup=False)


def sup_convolution(
    b: Boundary,
    delta: Real,
    xi_grid: XiGrid,
    dates: Sequence[float],
    prune: bool = False,
) -> ConvolutionResult:
    _check_delta(delta)
    return _convolve(b, delta, xi_grid, dates, prune, sup=True)
