"""Heuristic gamma-maximizer certificate for a trained boundary.

The supremum of the relaxed value over all networks is not computable; the
certificate compares the trained network against a finite set of probe
networks on one common batch and reports what that set supports.
"""
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from market_env.coordinates import CoordinateSystem
from market_env.market import MarketParams, TimeGrid, simulate_paths
from market_env.payoffs import Payoff
from market_env.utils import FloatArray
from stopping_agent.boundary import TabularBoundary
from stopping_agent.mlp import MlpBoundary, init_mlp
from stopping_agent.stopping import ValueEstimate, value_relaxed
from trainer.train_config import TrainConfig, eps_at

logger = logging.getLogger("logger")


@dataclass(frozen=True)
class Probe:
    name: str
    boundary: MlpBoundary


@dataclass(frozen=True)
class GammaReport:
    trained: ValueEstimate
    gamma: float
    # trained value minus the best probe value; >= -gamma passes
    gap: float
    satisfied: bool
    vacuous: bool
    best_probe: str | None = None
    probe_values: dict[str, float] = field(default_factory=dict)

    def as_dict(self) -> dict[str, object]:
        return {
            "trained": self.trained.as_dict(),
            "gamma": self.gamma,
            "gap": self.gap,
            "satisfied": self.satisfied,
            "vacuous": self.vacuous,
            "best_probe": self.best_probe,
            "probe_values": dict(self.probe_values),
        }


def certify_gamma_maximizer(
    net: MlpBoundary,
    cfg: TrainConfig,
    probes: Sequence[Probe],
    params: MarketParams,
    grid: TimeGrid,
    payoff: Payoff,
    cs: CoordinateSystem,
    eta: int = 1,
    n_paths: int | None = None,
) -> GammaReport:
    # a stream no training step uses
    stream = cfg.iterations + 1
    paths = simulate_paths(
        params, grid, n_paths or cfg.batch_size, cfg.seed, stream=stream
    )
    eps = eps_at(cfg, max(cfg.iterations - 1, 0))
    trained = value_relaxed(net, eps, paths, payoff, cs, eta, cfg.force_terminal)
    if not probes:
        logger.info("[Certify] no probes, certificate is vacuous")
        return GammaReport(trained, cfg.gamma, 0.0, True, True)
    values = {
        probe.name: value_relaxed(
            probe.boundary, eps, paths, payoff, cs, eta, cfg.force_terminal
        ).mean
        for probe in probes
    }
    best = max(values, key=lambda name: values[name])
    gap = trained.mean - values[best]
    report = GammaReport(
        trained, cfg.gamma, gap, gap >= -cfg.gamma, False, best, values
    )
    logger.info(
        f"[Certify] trained={trained.mean:.6f} best probe {best}="
        f"{values[best]:.6f} gap={gap:.6f} gamma={cfg.gamma} "
        f"satisfied={report.satisfied}"
    )
    return report


def random_restart_probes(
    cfg: TrainConfig, net: MlpBoundary, n: int, seed: int
) -> list[Probe]:
    """Freshly initialised networks of the same architecture"""
    return [
        Probe(
            f"restart_{j}",
            init_mlp(
                net.xi_dim,
                cfg.hidden,
                net.horizon,
                seed=seed + j,
                output_scale=net.output_scale,
                init_level=cfg.init_level,
            ),
        )
        for j in range(n)
    ]


def perturbation_probes(
    net: MlpBoundary, n: int, scale: float, seed: int
) -> list[Probe]:
    """theta + scale * |theta|_rms * N(0, 1) perturbations"""
    rng = np.random.default_rng(seed)
    rms = float(np.sqrt(np.mean(net.theta**2))) or 1.0
    return [
        Probe(
            f"perturb_{j}",
            net.with_theta(net.theta + scale * rms * rng.standard_normal(net.n_params)),
        )
        for j in range(n)
    ]


def _fit_targets(
    boundary: TabularBoundary, cap: float | None
) -> tuple[FloatArray, FloatArray, FloatArray]:
    nodes = boundary.xi_grid.nodes()
    values = boundary.values_at_nodes()
    finite = values[np.isfinite(values)]
    if finite.size == 0:
        raise ValueError("The boundary has no finite value to fit")
    ceiling = cap if cap is not None else 2.0 * float(finite.max())
    t = np.repeat(np.asarray(boundary.dates), nodes.shape[0])
    xi = np.tile(nodes, (len(boundary.dates), 1))
    target = np.minimum(values.ravel(), ceiling)
    return t, xi, target


def fit_mlp_to_boundary(
    boundary: TabularBoundary,
    net: MlpBoundary,
    max_iter: int = 500,
    cap: float | None = None,
) -> MlpBoundary:
    """Least-squares fit of the network to a tabular boundary with L-BFGS.

    +inf entries are replaced by cap (default twice the largest finite
    value) before fitting.
    """
    t, xi, target = _fit_targets(boundary, cap)
    n = target.size

    def loss_and_grad(theta: FloatArray) -> tuple[float, FloatArray]:
        candidate = net.with_theta(theta)
        tape = candidate.forward(t, xi)
        resid = tape.output - target
        return float(np.mean(resid**2)), candidate.backward(tape, 2.0 * resid / n)

    result = minimize(
        loss_and_grad,
        net.theta,
        jac=True,
        method="L-BFGS-B",
        options={"maxiter": max_iter},
    )
    logger.info(
        f"[Certify] fitted network to boundary: mse={result.fun:.6g} "
        f"({result.nit} iterations)"
    )
    return net.with_theta(result.x)
