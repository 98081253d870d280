"""Stochastic gradient ascent on the relaxed value, and strict evaluation"""
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from tqdm import tqdm

from market_env.constants import EVAL_STREAM
from market_env.coordinates import CoordinateSystem
from market_env.env_config import get_num_threads
from market_env.market import MarketParams, PathBatch, TimeGrid, simulate_paths
from market_env.payoffs import Payoff
from stopping_agent.mlp import MlpBoundary, init_mlp
from stopping_agent.stopping import ValueEstimate, pool_estimates, value_strict
from trainer.gradients import grad_relaxed_value
from trainer.train_config import TrainConfig, eps_at, learning_rate

logger = logging.getLogger("logger")


class DivergenceError(RuntimeError):
    def __init__(self, iteration: int, grad_norms: list[float]) -> None:
        super().__init__(
            f"Gradient norm above threshold for {len(grad_norms)} consecutive "
            f"iterations, aborting at iteration {iteration} (last norms "
            f"{[f'{g:.3e}' for g in grad_norms[-5:]]})"
        )
        self.iteration = iteration
        self.grad_norms = grad_norms


@dataclass
class TrainLog:
    value: list[float] = field(default_factory=list)
    grad_norm: list[float] = field(default_factory=list)
    lr: list[float] = field(default_factory=list)
    eps: list[float] = field(default_factory=list)
    running_best: list[float] = field(default_factory=list)
    wall_clock: list[float] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.value)

    def append(
        self, value: float, grad_norm: float, lr: float, eps: float, wall: float
    ) -> None:
        best = max(self.running_best[-1], value) if self.running_best else value
        self.value.append(value)
        self.grad_norm.append(grad_norm)
        self.lr.append(lr)
        self.eps.append(eps)
        self.running_best.append(best)
        self.wall_clock.append(wall)

    def to_frame(self) -> pd.DataFrame:
        """Deterministic columns only; wall-clock goes to its own file"""
        return pd.DataFrame(
            {
                "iteration": np.arange(len(self)),
                "value": self.value,
                "grad_norm": self.grad_norm,
                "lr": self.lr,
                "eps": self.eps,
                "running_best": self.running_best,
            }
        )

    def save_csv(self, path: Path | str) -> None:
        self.to_frame().to_csv(path, index=False, float_format="%.17g")

    def save_timing(self, path: Path | str) -> None:
        pd.DataFrame(
            {"iteration": np.arange(len(self)), "wall_clock": self.wall_clock}
        ).to_csv(path, index=False)


def training_batch(
    cfg: TrainConfig, params: MarketParams, grid: TimeGrid, i: int
) -> PathBatch:
    """Fresh paths for step i, on stream i + 1 so that stream 0 stays free
    for evaluation"""
    paths = simulate_paths(params, grid, cfg.batch_size, cfg.seed, stream=i + 1)
    if not cfg.symmetrize or params.n_assets != 2:
        return paths
    return PathBatch(
        np.concatenate([paths.values, paths.swapped().values], axis=0),
        paths.seed,
        grid,
        paths.stream,
        paths.first_path,
    )


def initial_network(
    cfg: TrainConfig, grid: TimeGrid, cs: CoordinateSystem
) -> MlpBoundary:
    return init_mlp(
        cs.xi_dim,
        cfg.hidden,
        horizon=grid.horizon if grid.horizon > 0 else 1.0,
        seed=cfg.seed,
        output_scale=cfg.output_scale,
        init_level=cfg.init_level,
    )


def train_nosb(
    cfg: TrainConfig,
    params: MarketParams,
    grid: TimeGrid,
    payoff: Payoff,
    cs: CoordinateSystem,
    eta: int = 1,
    net: MlpBoundary | None = None,
    progress: bool = True,
) -> tuple[MlpBoundary, TrainLog]:
    net = initial_network(cfg, grid, cs) if net is None else net
    theta = net.theta.copy()
    velocity = np.zeros_like(theta)
    log = TrainLog()
    above = 0
    start = time.perf_counter()
    for i in tqdm(range(cfg.iterations), disable=not progress, desc="train"):
        eps = eps_at(cfg, i)
        lr = learning_rate(cfg, i)
        paths = training_batch(cfg, params, grid, i)
        step = grad_relaxed_value(
            net.with_theta(theta), paths, eps, payoff, cs, eta, cfg.force_terminal
        )
        norm = float(np.linalg.norm(step.grad))
        if norm > cfg.divergence_threshold:
            above += 1
            logger.warning(
                f"[Train] iter={i} grad_norm={norm:.3e} above threshold "
                f"({above}/{cfg.divergence_patience})"
            )
            if above >= cfg.divergence_patience:
                raise DivergenceError(i, log.grad_norm + [norm])
        else:
            above = 0
        velocity = cfg.momentum * velocity + lr * step.grad
        theta = theta + velocity
        log.append(step.value, norm, lr, eps, time.perf_counter() - start)
        if i % cfg.log_every == 0 or i == cfg.iterations - 1:
            logger.info(
                f"[Train] iter={i} value={step.value:.6f} grad_norm={norm:.3e} "
                f"lr={lr:.3e} eps={eps:.4f} best={log.running_best[-1]:.6f}"
            )
    return net.with_theta(theta), log


def evaluate_trained(
    net: MlpBoundary,
    n_paths: int,
    seed: int,
    params: MarketParams,
    grid: TimeGrid,
    payoff: Payoff,
    cs: CoordinateSystem,
    eta: int = 1,
    force_terminal: bool = True,
    chunk: int = 65536,
) -> ValueEstimate:
    """Strict value of the hitting time of g on fresh evaluation paths.

    Chunks are simulated at their own path offsets on the evaluation stream
    and pooled in chunk order, so the result does not depend on the thread
    count.
    """
    if n_paths < 1:
        raise ValueError(f"n_paths must be >= 1, got {n_paths}")
    starts = list(range(0, n_paths, chunk))

    def run(first: int) -> ValueEstimate:
        paths = simulate_paths(
            params,
            grid,
            min(chunk, n_paths - first),
            seed,
            stream=EVAL_STREAM,
            first_path=first,
        )
        return value_strict(net, paths, payoff, cs, eta, force_terminal)

    with ThreadPoolExecutor(max_workers=get_num_threads()) as pool:
        estimates = list(pool.map(run, starts))
    est = pool_estimates(estimates)
    logger.info(
        f"[Result] strict value {est.mean:.6f} +- {est.stderr:.6f} "
        f"(J={est.n})"
    )
    return est
