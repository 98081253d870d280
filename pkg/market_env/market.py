"""Time grid, multi-asset Black-Scholes market and exact path simulation.

Paths are drawn with a counter-based generator (Philox): path ``i`` of
stream ``s`` under ``seed`` lives in block ``i // PATH_BLOCK_SIZE`` whose
counter is ``(0, 0, block, s)``. A path therefore depends only on
``(seed, stream, i)`` and never on how many paths are drawn around it.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from beartype import beartype

from market_env.constants import PATH_BLOCK_SIZE, PSD_TOL
from market_env.utils import FloatArray, Real

logger = logging.getLogger("logger")


class MarketParamsError(ValueError):
    pass


@dataclass(frozen=True)
class TimeGrid:
    """Exercise dates in years, strictly increasing and starting at 0"""

    dates: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.dates) < 1:
            raise MarketParamsError("A time grid needs at least one date")
        if self.dates[0] != 0.0:
            raise MarketParamsError(
                f"The first date must be 0, got {self.dates[0]}"
            )
        if any(b <= a for a, b in zip(self.dates[:-1], self.dates[1:])):
            raise MarketParamsError(
                f"Dates must be strictly increasing: {self.dates}"
            )

    def __len__(self) -> int:
        return len(self.dates)

    @property
    def horizon(self) -> float:
        return self.dates[-1]

    def as_array(self) -> FloatArray:
        return np.asarray(self.dates, dtype=np.float64)

    def increments(self) -> FloatArray:
        return np.diff(self.as_array())

    def index_of(self, t: float, tol: float = 1e-12) -> int:
        arr = self.as_array()
        k = int(np.argmin(np.abs(arr - t)))
        if abs(arr[k] - t) > tol * max(1.0, abs(t)):
            raise ValueError(f"t={t} is not a date of the grid {self.dates}")
        return k


@beartype
def build_time_grid(horizon: Real, n_dates: int) -> TimeGrid:
    if horizon <= 0:
        raise MarketParamsError(f"horizon must be positive, got {horizon}")
    if n_dates < 1:
        raise MarketParamsError(f"n_dates must be >= 1, got {n_dates}")
    if n_dates == 1:
        return TimeGrid((0.0,))
    h = horizon / (n_dates - 1)
    dates = [k * h for k in range(n_dates - 1)] + [float(horizon)]
    return TimeGrid(tuple(float(d) for d in dates))


@dataclass(frozen=True)
class MarketParams:
    """Independent or correlated geometric Brownian motions.

    Attributes:
        spot: initial prices x0, one per asset.
        rate: risk-free rate r (1/year).
        dividend: continuous dividend yield q per asset (1/year).
        vol: volatility per asset (1/sqrt(year)).
        correlation: m x m correlation matrix of the driving noises.
    """

    spot: tuple[float, ...]
    rate: float
    dividend: tuple[float, ...]
    vol: tuple[float, ...]
    correlation: tuple[tuple[float, ...], ...]
    _factor: FloatArray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        m = len(self.spot)
        if m < 1:
            raise MarketParamsError("At least one asset is required")
        if len(self.dividend) != m or len(self.vol) != m:
            raise MarketParamsError(
                f"dividend and vol must have {m} entries, got "
                f"{len(self.dividend)} and {len(self.vol)}"
            )
        if any(x <= 0 for x in self.spot):
            raise MarketParamsError(f"spot must be positive: {self.spot}")
        if any(s < 0 for s in self.vol):
            raise MarketParamsError(f"vol must be nonnegative: {self.vol}")
        corr = np.asarray(self.correlation, dtype=np.float64)
        if corr.shape != (m, m):
            raise MarketParamsError(
                f"correlation must be {m}x{m}, got shape {corr.shape}"
            )
        if not np.allclose(corr, corr.T, atol=0.0, rtol=0.0):
            raise MarketParamsError("correlation must be symmetric")
        if not np.all(np.diag(corr) == 1.0):
            raise MarketParamsError("correlation must have unit diagonal")
        eig = np.linalg.eigvalsh(corr)
        if eig.min() < -PSD_TOL:
            raise MarketParamsError(
                f"correlation is not positive semidefinite "
                f"(smallest eigenvalue {eig.min():.3e})"
            )
        object.__setattr__(self, "_factor", _psd_factor(corr))

    @classmethod
    def symmetric(
        cls,
        n_assets: int,
        spot: float,
        rate: float,
        dividend: float,
        vol: float,
        rho: float = 0.0,
    ) -> "MarketParams":
        corr = tuple(
            tuple(1.0 if i == j else rho for j in range(n_assets))
            for i in range(n_assets)
        )
        return cls(
            spot=(spot,) * n_assets,
            rate=rate,
            dividend=(dividend,) * n_assets,
            vol=(vol,) * n_assets,
            correlation=corr,
        )

    @property
    def n_assets(self) -> int:
        return len(self.spot)

    @property
    def is_independent(self) -> bool:
        corr = np.asarray(self.correlation)
        return bool(np.all(corr[~np.eye(self.n_assets, dtype=bool)] == 0.0))

    def correlation_factor(self) -> FloatArray:
        """L with L @ L.T == correlation"""
        return self._factor.copy()


def _psd_factor(corr: FloatArray) -> FloatArray:
    try:
        return np.linalg.cholesky(corr)
    except np.linalg.LinAlgError:
        # singular but PSD, e.g. perfectly correlated assets
        w, v = np.linalg.eigh(corr)
        return v * np.sqrt(np.clip(w, 0.0, None))


@dataclass(frozen=True)
class PathBatch:
    """values[b, k, i]: price of asset i at date k on path first_path + b"""

    values: FloatArray
    seed: int
    grid: TimeGrid
    stream: int = 0
    first_path: int = 0

    @property
    def n_paths(self) -> int:
        return int(self.values.shape[0])

    @property
    def n_dates(self) -> int:
        return int(self.values.shape[1])

    @property
    def n_assets(self) -> int:
        return int(self.values.shape[2])

    def swapped(self) -> "PathBatch":
        """The same paths with the asset order reversed"""
        return PathBatch(
            values=self.values[:, :, ::-1].copy(),
            seed=self.seed,
            grid=self.grid,
            stream=self.stream,
            first_path=self.first_path,
        )


def _block_normals(
    seed: int, stream: int, block: int, n_steps: int, n_assets: int
) -> FloatArray:
    counter = np.array([0, 0, block, stream], dtype=np.uint64)
    bit_generator = np.random.Philox(key=seed, counter=counter)
    rng = np.random.Generator(bit_generator)
    return rng.standard_normal((PATH_BLOCK_SIZE, n_steps, n_assets))


@beartype
def simulate_paths(
    params: MarketParams,
    grid: TimeGrid,
    n_paths: int,
    seed: int,
    stream: int = 0,
    first_path: int = 0,
) -> PathBatch:
    """Exact lognormal stepping on the grid dates.

    Each increment uses the closed-form GBM transition with log-drift
    (r - q - vol^2 / 2) dt and noise covariance vol_i vol_j corr_ij dt.
    """
    if n_paths < 1:
        raise ValueError(f"n_paths must be >= 1, got {n_paths}")
    if seed < 0 or stream < 0 or first_path < 0:
        raise ValueError(
            f"seed, stream and first_path must be nonnegative, got "
            f"{seed}, {stream}, {first_path}"
        )
    m = params.n_assets
    n_steps = len(grid) - 1
    x0 = np.asarray(params.spot, dtype=np.float64)
    values = np.empty((n_paths, len(grid), m), dtype=np.float64)
    values[:, 0, :] = x0
    if n_steps == 0:
        return PathBatch(values, seed, grid, stream, first_path)

    dt = grid.increments()[:, None]
    vol = np.asarray(params.vol, dtype=np.float64)[None, :]
    q = np.asarray(params.dividend, dtype=np.float64)[None, :]
    drift = (params.rate - q - 0.5 * vol**2) * dt
    scale = vol * np.sqrt(dt)
    factor = params.correlation_factor()

    first_block = first_path // PATH_BLOCK_SIZE
    last_block = (first_path + n_paths - 1) // PATH_BLOCK_SIZE
    normals = np.concatenate(
        [
            _block_normals(seed, stream, block, n_steps, m)
            for block in range(first_block, last_block + 1)
        ],
        axis=0,
    )
    offset = first_path - first_block * PATH_BLOCK_SIZE
    z = normals[offset : offset + n_paths] @ factor.T
    log_increments = drift[None, :, :] + scale[None, :, :] * z
    values[:, 1:, :] = x0 * np.exp(np.cumsum(log_increments, axis=1))
    return PathBatch(values, seed, grid, stream, first_path)
