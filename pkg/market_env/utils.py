from typing import Any, TypedDict

import numpy as np
import numpy.typing as npt

FloatArray = npt.NDArray[np.float64]
IntArray = npt.NDArray[np.int64]
BoolArray = npt.NDArray[np.bool_]

# beartype does not widen int to float
Real = int | float


class PathStatistics(TypedDict):
    date: list[float]
    alpha_mean: list[float]
    alpha_std: list[float]
    asset_mean: list[list[float]]
    asset_std: list[list[float]]


def as_state_array(x: Any, n_assets: int | None = None) -> FloatArray:
    """Coerce a single state or a batch of states to shape (N, m)"""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise ValueError(f"Expected states of shape (N, m), got {arr.shape}")
    if n_assets is not None and arr.shape[1] != n_assets:
        raise ValueError(
            f"Expected {n_assets} assets per state, got {arr.shape[1]}"
        )
    return arr
