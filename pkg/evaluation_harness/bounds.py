"""Batch estimates of the constants in the value-continuity inequalities"""
import numpy as np
import numpy.typing as npt

from evaluation_harness.metrics import ModulusTable
from market_env.utils import FloatArray, Real


def lipschitz_constant(rewards: FloatArray) -> float:
    """C = 2 ||sum_t |phi(t, X_t)| ||_{L2} over a (B, K) reward batch"""
    total = np.abs(rewards).sum(axis=1)
    return float(2.0 * np.sqrt(np.mean(total**2)))


def fuzzy_mass(
    modulus: ModulusTable, eps: Real, x0_in_band: bool
) -> float:
    """rho(eps) with date 0 replaced by the indicator of x0 in the band.

    alpha(X_0) is a point mass, so its modulus is 1 for every eps > 0.
    """
    per_date = modulus.at(float(eps))
    return float(per_date[1:].sum() + (1.0 if x0_in_band else 0.0))


def relaxation_gap_bound(
    lipschitz: Real, modulus: ModulusTable, eps: Real, x0_in_band: bool
) -> float:
    """Bound on |v(mu^eps_f) - v(tau_f)|"""
    return float(lipschitz * np.sqrt(fuzzy_mass(modulus, eps, x0_in_band)))


def dirac_tv_bound(
    lipschitz: Real, tau: npt.ArrayLike, tau_other: npt.ArrayLike
) -> float:
    """C sqrt(P(tau != tau')) for two hitting-time vectors"""
    a = np.asarray(tau)
    b = np.asarray(tau_other)
    if a.shape != b.shape:
        raise ValueError(f"Mismatched hitting times {a.shape} vs {b.shape}")
    return float(lipschitz * np.sqrt(np.mean(a != b)))
