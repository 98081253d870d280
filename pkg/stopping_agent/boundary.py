"""Stopping boundaries f: T x E -> [0, inf].

Every boundary is evaluated on batches: ``boundary(t, xi)`` takes dates of
shape (N,) and latent points of shape (N, d) and returns (N,) values.
+inf is a legal value and means "never stop here" for an epigraph region.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Literal, Sequence

import numpy as np
import numpy.typing as npt
import pandas as pd
from beartype import beartype

from market_env.utils import FloatArray, IntArray, Real

logger = logging.getLogger("logger")

InterpolationMode = Literal["nearest", "multilinear"]


def _as_batch(
    t: npt.ArrayLike, xi: npt.ArrayLike
) -> tuple[FloatArray, FloatArray]:
    pts = np.asarray(xi, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[None, :]
    times = np.broadcast_to(
        np.asarray(t, dtype=np.float64), (pts.shape[0],)
    )
    return times, pts


class Boundary:
    """Base class for the boundary representations"""

    def __call__(self, t: npt.ArrayLike, xi: npt.ArrayLike) -> FloatArray:
        times, pts = _as_batch(t, xi)
        return self.evaluate(times, pts)

    def evaluate(self, t: FloatArray, xi: FloatArray) -> FloatArray:
        raise NotImplementedError

    @property
    def theta(self) -> FloatArray | None:
        return None


@dataclass(frozen=True)
class ConstantBoundary(Boundary):
    value: float

    def __post_init__(self) -> None:
        if not self.value >= 0:
            raise ValueError(f"Boundary values must be >= 0, got {self.value}")

    def evaluate(self, t: FloatArray, xi: FloatArray) -> FloatArray:
        return np.full(xi.shape[0], self.value, dtype=np.float64)


@dataclass(frozen=True)
class AnalyticBoundary(Boundary):
    """A closed-form fixture, func(t, xi) -> values"""

    func: Callable[[FloatArray, FloatArray], FloatArray]
    name: str = "analytic"

    def evaluate(self, t: FloatArray, xi: FloatArray) -> FloatArray:
        out = np.asarray(self.func(t, xi), dtype=np.float64)
        if out.shape != (xi.shape[0],):
            out = np.broadcast_to(out, (xi.shape[0],)).copy()
        return out


@dataclass(frozen=True)
class XiGrid:
    """Tensor grid over a compact box K of latent points"""

    axes: tuple[FloatArray, ...]

    def __post_init__(self) -> None:
        if len(self.axes) < 1:
            raise ValueError("A latent grid needs at least one axis")
        for axis in self.axes:
            if axis.ndim != 1 or axis.size < 1:
                raise ValueError("Grid axes must be non-empty 1-d arrays")
            if np.any(np.diff(axis) <= 0):
                raise ValueError("Grid axes must be strictly increasing")

    @classmethod
    def uniform(cls, low: Real, high: Real, n: int) -> "XiGrid":
        return cls((np.linspace(float(low), float(high), n),))

    @classmethod
    def box(
        cls, lows: Sequence[Real], highs: Sequence[Real], counts: Sequence[int]
    ) -> "XiGrid":
        return cls(
            tuple(
                np.linspace(float(lo), float(hi), n)
                for lo, hi, n in zip(lows, highs, counts)
            )
        )

    @property
    def dim(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(axis.size for axis in self.axes)

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.shape))

    @property
    def step(self) -> float:
        """Largest spacing along any axis (0 for a single node)"""
        gaps = [np.diff(axis).max() for axis in self.axes if axis.size > 1]
        return float(max(gaps)) if gaps else 0.0

    def nodes(self) -> FloatArray:
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def same_as(self, other: "XiGrid") -> bool:
        return self.shape == other.shape and all(
            np.array_equal(a, b) for a, b in zip(self.axes, other.axes)
        )


def _locate(axis: FloatArray, q: FloatArray) -> tuple[IntArray, FloatArray]:
    """Cell index and in-cell weight, clamping queries to the axis range"""
    n = axis.size
    if n == 1:
        return np.zeros(q.shape, dtype=np.int64), np.zeros(q.shape)
    qc = np.clip(q, axis[0], axis[-1])
    hi = np.clip(np.searchsorted(axis, qc, side="right"), 1, n - 1)
    lo = hi - 1
    w = (qc - axis[lo]) / (axis[hi] - axis[lo])
    return lo.astype(np.int64), w


@dataclass(frozen=True)
class TabularBoundary(Boundary):
    """Values on dates x XiGrid; queries outside the box clamp to its edge.

    table has shape (len(dates),) + xi_grid.shape and holds nonnegative
    reals or +inf.
    """

    dates: tuple[float, ...]
    xi_grid: XiGrid
    table: FloatArray
    mode: InterpolationMode = "multilinear"

    def __post_init__(self) -> None:
        expected = (len(self.dates),) + self.xi_grid.shape
        if self.table.shape != expected:
            raise ValueError(
                f"table shape {self.table.shape} != expected {expected}"
            )
        if np.any(np.isnan(self.table)):
            raise ValueError("Boundary tables may not contain NaN")
        if self.mode not in ("nearest", "multilinear"):
            raise ValueError(f"Unknown interpolation mode {self.mode}")

    def date_indices(self, t: FloatArray, tol: float = 1e-9) -> IntArray:
        dates = np.asarray(self.dates)
        k = np.abs(t[:, None] - dates[None, :]).argmin(axis=1)
        if np.any(np.abs(dates[k] - t) > tol):
            bad = t[np.abs(dates[k] - t) > tol][0]
            raise ValueError(f"t={bad} is not a date of the boundary table")
        return k.astype(np.int64)

    def evaluate(self, t: FloatArray, xi: FloatArray) -> FloatArray:
        if xi.shape[1] != self.xi_grid.dim:
            raise ValueError(
                f"Expected latent points of dimension {self.xi_grid.dim}, "
                f"got {xi.shape[1]}"
            )
        k = self.date_indices(t)
        located = [
            _locate(axis, xi[:, d]) for d, axis in enumerate(self.xi_grid.axes)
        ]
        if self.mode == "nearest":
            idx = tuple(
                np.minimum(lo + (w > 0.5), axis.size - 1)
                for (lo, w), axis in zip(located, self.xi_grid.axes)
            )
            return self.table[(k,) + idx]

        finite = np.where(np.isinf(self.table), 0.0, self.table)
        is_inf = np.isinf(self.table).astype(np.float64)
        value = np.zeros(xi.shape[0])
        inf_weight = np.zeros(xi.shape[0])
        for corner in itertools.product((0, 1), repeat=self.xi_grid.dim):
            weight = np.ones(xi.shape[0])
            idx = []
            for bit, (lo, w), axis in zip(
                corner, located, self.xi_grid.axes
            ):
                weight = weight * (w if bit else 1.0 - w)
                idx.append(np.minimum(lo + bit, axis.size - 1))
            at = (k,) + tuple(idx)
            value += weight * finite[at]
            inf_weight += weight * is_inf[at]
        return np.where(inf_weight > 0, np.inf, value)

    def values_at_nodes(self) -> FloatArray:
        """(len(dates), n_nodes) view of the table in node order"""
        return self.table.reshape(len(self.dates), -1)


@beartype
def eval_boundary(
    boundary: Boundary, t: npt.ArrayLike, xi: npt.ArrayLike
) -> FloatArray:
    return boundary(t, xi)


def tabulate(
    boundary: Boundary,
    dates: Sequence[float],
    xi_grid: XiGrid,
    mode: InterpolationMode = "multilinear",
) -> TabularBoundary:
    """Restrict a boundary to dates x K"""
    nodes = xi_grid.nodes()
    rows = [boundary(float(t), nodes) for t in dates]
    table = np.stack(rows).reshape((len(dates),) + xi_grid.shape)
    return TabularBoundary(tuple(float(t) for t in dates), xi_grid, table, mode)


def save_tabular_boundary(boundary: TabularBoundary, path: Path | str) -> None:
    nodes = boundary.xi_grid.nodes()
    frames = []
    for k, t in enumerate(boundary.dates):
        frame = pd.DataFrame(
            {f"xi_{d + 1}": nodes[:, d] for d in range(nodes.shape[1])}
        )
        frame.insert(0, "t", t)
        frame["value"] = boundary.values_at_nodes()[k]
        frames.append(frame)
    pd.concat(frames, ignore_index=True).to_csv(
        path, index=False, float_format="%.17g"
    )


def load_tabular_boundary(
    path: Path | str, mode: InterpolationMode = "multilinear"
) -> TabularBoundary:
    frame = pd.read_csv(path, float_precision="round_trip")
    xi_cols = [c for c in frame.columns if c.startswith("xi_")]
    if "t" not in frame.columns or "value" not in frame.columns or not xi_cols:
        raise ValueError(
            f"{path} is not a boundary file (need t, xi_*, value columns)"
        )
    frame = frame.sort_values(["t"] + xi_cols, kind="mergesort")
    dates = tuple(float(t) for t in np.unique(frame["t"].to_numpy()))
    axes = tuple(np.unique(frame[c].to_numpy(dtype=np.float64)) for c in xi_cols)
    grid = XiGrid(axes)
    values = frame["value"].to_numpy(dtype=np.float64)
    if values.size != len(dates) * grid.n_nodes:
        raise ValueError(f"{path} does not hold a full tensor grid")
    table = values.reshape((len(dates),) + grid.shape)
    return TabularBoundary(dates, grid, table, mode)
