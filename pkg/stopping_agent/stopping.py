"""Hitting times, boundary-induced relaxed rules and their values.

Rules are carried as weight matrices of shape (B, K): weights[b, k] is the
mass a rule puts on date k along path b. A strict rule (hitting time) is the
Dirac special case.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import numpy.typing as npt
import pandas as pd
from beartype import beartype

from market_env.constants import NEVER
from market_env.coordinates import CoordinateSystem, Orientation, as_orientation
from market_env.market import PathBatch, TimeGrid
from market_env.payoffs import Payoff, path_rewards
from market_env.utils import FloatArray, IntArray, Real
from stopping_agent.boundary import Boundary
from stopping_agent.regions import gap_from_levels, phase_indicator

logger = logging.getLogger("logger")

NORMALIZATION_TOL = 1e-12


@dataclass(frozen=True)
class ValueEstimate:
    mean: float
    stderr: float
    n: int

    @classmethod
    def from_samples(cls, samples: npt.ArrayLike) -> "ValueEstimate":
        x = np.asarray(samples, dtype=np.float64).ravel()
        if x.size == 0:
            raise ValueError("Cannot estimate a value from zero samples")
        std = float(x.std(ddof=1)) if x.size > 1 else 0.0
        return cls(float(x.mean()), std / np.sqrt(x.size), int(x.size))

    @property
    def std(self) -> float:
        return self.stderr * np.sqrt(self.n)

    def pool(self, other: "ValueEstimate") -> "ValueEstimate":
        """Combine two disjoint samples exactly from their moments"""
        n = self.n + other.n
        total = self.mean * self.n + other.mean * other.n
        sq = sum(
            (e.n - 1) * e.std**2 + e.n * e.mean**2 for e in (self, other)
        )
        mean = total / n
        var = max(sq - n * mean**2, 0.0) / (n - 1) if n > 1 else 0.0
        return ValueEstimate(mean, float(np.sqrt(var / n)), n)

    def as_dict(self) -> dict[str, float | int]:
        return {"mean": self.mean, "stderr": self.stderr, "n": self.n}


def pool_estimates(estimates: Sequence[ValueEstimate]) -> ValueEstimate:
    """Pool in the given order"""
    if not estimates:
        raise ValueError("Nothing to pool")
    out = estimates[0]
    for est in estimates[1:]:
        out = out.pool(est)
    return out


@dataclass(frozen=True)
class RelaxedRule:
    """Per-path stopping weights of shape (B, K)"""

    weights: FloatArray

    def __post_init__(self) -> None:
        if self.weights.ndim != 2:
            raise ValueError(
                f"Rule weights must be (B, K), got {self.weights.shape}"
            )
        if np.any(self.weights < -NORMALIZATION_TOL) or np.any(
            self.weights > 1.0 + NORMALIZATION_TOL
        ):
            raise ValueError("Rule weights must lie in [0, 1]")

    @property
    def n_paths(self) -> int:
        return int(self.weights.shape[0])

    @property
    def n_dates(self) -> int:
        return int(self.weights.shape[1])

    def residual_mass(self) -> FloatArray:
        """1 - sum_k weights, the mass never absorbed on each path"""
        return 1.0 - self.weights.sum(axis=1)

    def is_normalized(self, tol: float = NORMALIZATION_TOL) -> bool:
        return bool(np.all(np.abs(self.residual_mass()) <= tol))

    def is_strict(self, tol: float = 1e-9) -> bool:
        w = self.weights
        return bool(np.all((np.abs(w) <= tol) | (np.abs(w - 1.0) <= tol)))

    @classmethod
    def dirac(cls, tau: IntArray, n_dates: int) -> "RelaxedRule":
        """Dirac rules at tau; NEVER rows get no mass"""
        weights = np.zeros((tau.size, n_dates))
        hit = tau != NEVER
        weights[np.flatnonzero(hit), tau[hit]] = 1.0
        return cls(weights)


def weights_from_intensities(
    p: FloatArray, force_terminal: bool = True
) -> FloatArray:
    """P_k = p_k (1 - sum_{s<k} P_s), computed with the running survival"""
    p = np.array(p, dtype=np.float64, copy=True)
    if force_terminal:
        p[..., -1] = 1.0
    weights = np.empty_like(p)
    survival = np.ones(p.shape[:-1])
    for k in range(p.shape[-1]):
        weights[..., k] = p[..., k] * survival
        survival = survival * (1.0 - p[..., k])
    return weights


def path_levels(
    f: Boundary, values: FloatArray, grid: TimeGrid, cs: CoordinateSystem
) -> tuple[FloatArray, FloatArray]:
    """(f(t_k, Xi(X_k)), alpha(X_k)) for a (B, K, m) array of paths"""
    n_paths, n_dates, _ = values.shape
    level = np.empty((n_paths, n_dates))
    stat = np.empty((n_paths, n_dates))
    for k, t in enumerate(grid.dates):
        x = values[:, k, :]
        level[:, k] = f(t, cs.xi(x))
        stat[:, k] = cs.alpha(x)
    return level, stat


def stop_matrix(level: FloatArray, stat: FloatArray, eta: int) -> npt.NDArray[np.bool_]:
    if as_orientation(eta) == Orientation.EPIGRAPH:
        return stat >= level
    return stat <= level


def first_stop(stopped: npt.NDArray[np.bool_], force_terminal: bool) -> IntArray:
    hit = stopped.any(axis=1)
    tau = np.where(hit, stopped.argmax(axis=1), NEVER).astype(np.int64)
    if force_terminal:
        tau[~hit] = stopped.shape[1] - 1
    return tau


def hitting_times(
    f: Boundary,
    paths: PathBatch,
    cs: CoordinateSystem,
    eta: int = 1,
    force_terminal: bool = True,
) -> IntArray:
    level, stat = path_levels(f, paths.values, paths.grid, cs)
    return first_stop(stop_matrix(level, stat, eta), force_terminal)


def hitting_time(
    f: Boundary,
    path: npt.ArrayLike,
    grid: TimeGrid,
    cs: CoordinateSystem,
    eta: int = 1,
    force_terminal: bool = True,
) -> int:
    """First date index of a single (K, m) path in S_t(f), or NEVER"""
    values = np.asarray(path, dtype=np.float64)[None, :, :]
    level, stat = path_levels(f, values, grid, cs)
    return int(first_stop(stop_matrix(level, stat, eta), force_terminal)[0])


def relaxed_weights(
    f: Boundary,
    eps: Real,
    paths: PathBatch,
    cs: CoordinateSystem,
    eta: int = 1,
    force_terminal: bool = True,
) -> RelaxedRule:
    level, stat = path_levels(f, paths.values, paths.grid, cs)
    p = phase_indicator(gap_from_levels(level, stat, eta), eps)
    return RelaxedRule(weights_from_intensities(p, force_terminal))


def rule_path_values(rule: RelaxedRule, rewards: FloatArray) -> FloatArray:
    """sum_k P_k phi(t_k, X_k) per path"""
    if rule.weights.shape != rewards.shape:
        raise ValueError(
            f"Rule shape {rule.weights.shape} != rewards shape {rewards.shape}"
        )
    return np.asarray((rule.weights * rewards).sum(axis=1))


def stopped_rewards(tau: IntArray, rewards: FloatArray) -> FloatArray:
    """phi(tau, X_tau) per path, 0 where tau is NEVER"""
    safe = np.where(tau == NEVER, 0, tau)
    out = rewards[np.arange(tau.size), safe]
    return np.where(tau == NEVER, 0.0, out)


@beartype
def value_strict(
    f: Boundary,
    paths: PathBatch,
    payoff: Payoff,
    cs: CoordinateSystem,
    eta: int = 1,
    force_terminal: bool = True,
) -> ValueEstimate:
    rewards = path_rewards(payoff, paths.values, paths.grid.as_array(), cs)
    tau = hitting_times(f, paths, cs, eta, force_terminal)
    return ValueEstimate.from_samples(stopped_rewards(tau, rewards))


@beartype
def value_relaxed(
    f: Boundary,
    eps: Real,
    paths: PathBatch,
    payoff: Payoff,
    cs: CoordinateSystem,
    eta: int = 1,
    force_terminal: bool = True,
) -> ValueEstimate:
    rewards = path_rewards(payoff, paths.values, paths.grid.as_array(), cs)
    rule = relaxed_weights(f, eps, paths, cs, eta, force_terminal)
    return ValueEstimate.from_samples(rule_path_values(rule, rewards))


def _tv_rows(mu: FloatArray, nu: FloatArray) -> FloatArray:
    if mu.shape != nu.shape:
        raise ValueError(f"Mismatched rule shapes {mu.shape} and {nu.shape}")
    return np.asarray(0.5 * np.abs(mu - nu).sum(axis=-1))


def tv_distance(mu: npt.ArrayLike, nu: npt.ArrayLike) -> float:
    a = np.asarray(mu, dtype=np.float64)
    b = np.asarray(nu, dtype=np.float64)
    if a.ndim != 1:
        raise ValueError("tv_distance compares two weight vectors")
    for w in (a, b):
        if abs(w.sum() - 1.0) > 1e-9:
            raise ValueError(f"Weights must sum to 1, got {w.sum()}")
    return float(_tv_rows(a, b))


def tv_bar2(rules: RelaxedRule, other: RelaxedRule) -> float:
    """L2 norm over paths of the per-path total variation distance"""
    if rules.n_paths != other.n_paths:
        raise ValueError(
            f"Mismatched batches: {rules.n_paths} vs {other.n_paths} paths"
        )
    tv = _tv_rows(rules.weights, other.weights)
    return float(np.sqrt(np.mean(tv**2)))


def save_rules_csv(
    rule: RelaxedRule, path: Path | str, first_path: int = 0
) -> None:
    n_paths, n_dates = rule.weights.shape
    pd.DataFrame(
        {
            "path": np.repeat(np.arange(n_paths) + first_path, n_dates),
            "date": np.tile(np.arange(n_dates), n_paths),
            "weight": rule.weights.ravel(),
        }
    ).to_csv(path, index=False, float_format="%.17g")


class BoundaryPolicy:
    """Stop/continue decisions of a boundary for StoppingEnv observations"""

    def __init__(
        self, f: Boundary, cs: CoordinateSystem, eta: int = 1
    ) -> None:
        self.f = f
        self.cs = cs
        self.eta = as_orientation(eta)

    def __call__(self, obs: FloatArray) -> int:
        t, x = float(obs[0]), obs[1:][None, :]
        level = self.f(t, self.cs.xi(x))
        stopped = stop_matrix(level[:, None], self.cs.alpha(x)[:, None], self.eta)
        return int(bool(stopped[0, 0]))
