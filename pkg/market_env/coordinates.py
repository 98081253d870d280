"""Coordinate systems A = (Xi, alpha) mapping states to (latent point, level).

max_call_coords: alpha(x) = max_i x_i, Xi(x) = x / alpha(x), so that
    E = {xi in [0, 1]^m : max_i xi_i = 1}.
min_call_2d_coords: alpha(x) = min(x_1, x_2), Xi(x) = max / min in
    [1, inf). Xi is 2-to-1 off the diagonal, so the inverse takes a branch
    flag naming the larger asset.
"""
from dataclasses import dataclass
from enum import IntEnum

import numpy as np
import numpy.typing as npt

from market_env.constants import (
    COORDINATE_KINDS,
    ROUND_TRIP_TOL,
    CoordinateKind,
)
from market_env.utils import FloatArray, as_state_array


class CoordinateError(ValueError):
    pass


class Orientation(IntEnum):
    # stopping sections are epigraphs {alpha >= f}
    EPIGRAPH = 1
    # stopping sections are hypographs {alpha <= f}
    HYPOGRAPH = -1


def as_orientation(eta: int) -> Orientation:
    try:
        return Orientation(int(eta))
    except ValueError:
        raise ValueError(f"eta must be +1 or -1, got {eta}")


@dataclass(frozen=True)
class CoordinateSystem:
    kind: CoordinateKind
    n_assets: int

    def __post_init__(self) -> None:
        if self.kind not in COORDINATE_KINDS:
            raise CoordinateError(f"Unknown coordinate system {self.kind}")
        if self.n_assets < 1:
            raise CoordinateError("n_assets must be >= 1")
        if self.kind == "min_call_2d_coords" and self.n_assets != 2:
            raise CoordinateError(
                f"min_call_2d_coords needs 2 assets, got {self.n_assets}"
            )

    @property
    def xi_dim(self) -> int:
        match self.kind:
            case "max_call_coords":
                return self.n_assets
            case "min_call_2d_coords":
                return 1
            case _:
                raise CoordinateError(f"Unknown coordinate system {self.kind}")

    def _states(self, x: npt.ArrayLike) -> FloatArray:
        states = as_state_array(x, self.n_assets)
        if np.any(~(states > 0)):
            raise CoordinateError(
                "States must lie in the open positive orthant"
            )
        return states

    def alpha(self, x: npt.ArrayLike) -> FloatArray:
        states = self._states(x)
        match self.kind:
            case "max_call_coords":
                return states.max(axis=1)
            case "min_call_2d_coords":
                return states.min(axis=1)
            case _:
                raise CoordinateError(f"Unknown coordinate system {self.kind}")

    def xi(self, x: npt.ArrayLike) -> FloatArray:
        """Latent points, shape (N, xi_dim)"""
        states = self._states(x)
        match self.kind:
            case "max_call_coords":
                return states / states.max(axis=1, keepdims=True)
            case "min_call_2d_coords":
                return (states.max(axis=1) / states.min(axis=1))[:, None]
            case _:
                raise CoordinateError(f"Unknown coordinate system {self.kind}")

    def project(self, xi: npt.ArrayLike) -> FloatArray:
        """Map box points onto E (used when tabulating on a box grid)"""
        pts = np.atleast_2d(np.asarray(xi, dtype=np.float64))
        match self.kind:
            case "max_call_coords":
                top = pts.max(axis=1, keepdims=True)
                if np.any(top <= 0):
                    raise CoordinateError(
                        "Cannot project a latent point with no positive "
                        "component"
                    )
                return pts / top
            case "min_call_2d_coords":
                return np.maximum(pts, 1.0)
            case _:
                raise CoordinateError(f"Unknown coordinate system {self.kind}")

    def a_inverse(
        self,
        xi: npt.ArrayLike,
        a: npt.ArrayLike,
        branch: npt.ArrayLike = 1,
    ) -> FloatArray:
        """x = A^{-1}(xi, a).

        branch is only read by min_call_2d_coords: 1 when x_1 is the larger
        asset, 2 when x_2 is.
        """
        pts = np.atleast_2d(np.asarray(xi, dtype=np.float64))
        if pts.shape[1] != self.xi_dim:
            raise CoordinateError(
                f"Expected latent points of dimension {self.xi_dim}, got "
                f"{pts.shape[1]}"
            )
        level = np.broadcast_to(
            np.asarray(a, dtype=np.float64), (pts.shape[0],)
        )
        if np.any(level < 0):
            raise CoordinateError("The level a must be nonnegative")
        match self.kind:
            case "max_call_coords":
                if np.any(pts < 0) or np.any(
                    np.abs(pts.max(axis=1) - 1.0) > ROUND_TRIP_TOL
                ):
                    raise CoordinateError(
                        "max_call latent points must lie in [0, 1]^m with "
                        "max component 1"
                    )
                return pts * level[:, None]
            case "min_call_2d_coords":
                ratio = pts[:, 0]
                if np.any(ratio < 1.0):
                    raise CoordinateError(
                        "min_call_2d latent points must be >= 1"
                    )
                flag = np.broadcast_to(np.asarray(branch), ratio.shape)
                if np.any((flag != 1) & (flag != 2)):
                    raise CoordinateError("branch must be 1 or 2")
                larger = ratio * level
                first = np.where(flag == 1, larger, level)
                second = np.where(flag == 1, level, larger)
                return np.stack([first, second], axis=1)
            case _:
                raise CoordinateError(f"Unknown coordinate system {self.kind}")


def xi(cs: CoordinateSystem, x: npt.ArrayLike) -> FloatArray:
    return cs.xi(x)


def alpha(cs: CoordinateSystem, x: npt.ArrayLike) -> FloatArray:
    return cs.alpha(x)


def a_inverse(
    cs: CoordinateSystem,
    xi_point: npt.ArrayLike,
    a: npt.ArrayLike,
    branch: npt.ArrayLike = 1,
) -> FloatArray:
    return cs.a_inverse(xi_point, a, branch)
