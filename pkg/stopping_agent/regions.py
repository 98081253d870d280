"""Stopping regions S_t(f), the gap d(t, x; f) and the phase indicator.

For eta = +1 the section S_t(f) is the epigraph {alpha(x) >= f(t, Xi(x))};
for eta = -1 it is the hypograph {alpha(x) <= f(t, Xi(x))}. Points on the
boundary belong to the region.
"""
import numpy as np
import numpy.typing as npt

from market_env.coordinates import CoordinateSystem, Orientation, as_orientation
from market_env.utils import BoolArray, FloatArray, Real
from stopping_agent.boundary import Boundary


def gap_from_levels(
    level: npt.ArrayLike, a: npt.ArrayLike, eta: int = 1
) -> FloatArray:
    """(f - a)^+ for eta = +1, (a - f)^+ for eta = -1; +inf stays +inf"""
    f = np.asarray(level, dtype=np.float64)
    stat = np.asarray(a, dtype=np.float64)
    if as_orientation(eta) == Orientation.EPIGRAPH:
        return np.maximum(f - stat, 0.0)
    return np.maximum(stat - f, 0.0)


def boundary_levels(
    f: Boundary, t: npt.ArrayLike, x: npt.ArrayLike, cs: CoordinateSystem
) -> tuple[FloatArray, FloatArray]:
    """(f(t, Xi(x)), alpha(x)) for a batch of states"""
    return f(t, cs.xi(x)), cs.alpha(x)


def gap_distance(
    f: Boundary,
    t: npt.ArrayLike,
    x: npt.ArrayLike,
    cs: CoordinateSystem,
    eta: int = 1,
) -> FloatArray:
    level, a = boundary_levels(f, t, x, cs)
    return gap_from_levels(level, a, eta)


def in_stop_region(
    f: Boundary,
    t: npt.ArrayLike,
    x: npt.ArrayLike,
    cs: CoordinateSystem,
    eta: int = 1,
) -> BoolArray:
    level, a = boundary_levels(f, t, x, cs)
    if as_orientation(eta) == Orientation.EPIGRAPH:
        return np.asarray(a >= level)
    return np.asarray(a <= level)


def in_fuzzy_region(
    f: Boundary,
    t: npt.ArrayLike,
    x: npt.ArrayLike,
    cs: CoordinateSystem,
    eps: Real,
    eta: int = 1,
) -> BoolArray:
    """x in S_t(f - eps) but not in S_t(f), i.e. gap in (0, eps]"""
    gap = gap_distance(f, t, x, cs, eta)
    return np.asarray((gap > 0) & (gap <= eps))


def _check_eps(eps: Real) -> None:
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")


def phase_indicator(delta: npt.ArrayLike, eps: Real) -> FloatArray:
    """chi^eps(delta) = (1 - delta / eps)^+ ^ 1"""
    _check_eps(eps)
    gap = np.asarray(delta, dtype=np.float64)
    return np.clip(1.0 - gap / eps, 0.0, 1.0)


def phase_indicator_grad(delta: npt.ArrayLike, eps: Real) -> FloatArray:
    """d chi^eps / d delta.

    -1/eps on the open band (0, eps) and 0 elsewhere, including the kinks
    at 0 and eps.
    """
    _check_eps(eps)
    gap = np.asarray(delta, dtype=np.float64)
    return np.where((gap > 0) & (gap < eps), -1.0 / eps, 0.0)
