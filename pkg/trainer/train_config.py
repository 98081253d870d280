"""Config for boundary training."""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Any, Literal

LrSchedule = Literal["constant", "decay"]


@dataclass(frozen=True)
class TrainConfig:
    """A config for stochastic gradient ascent on the relaxed value.

    Attributes:
        iterations: number of ascent steps I.
        batch_size: paths per step B, freshly simulated each step.
        eps: width of the fuzzy band, in units of alpha.
        lr: base learning rate c.
        lr_schedule: "constant" (c) or "decay" (c / (1 + i / lr_decay_i0)).
        eval_paths: J, paths for the strict out-of-sample value.
        eval_seed: seed of the evaluation paths; defaults to seed. They are
            drawn on stream 0 while training step i uses stream i + 1.
        gamma: tolerance of the gamma-maximizer certificate.
        anneal: multiply eps by anneal_factor every anneal_every steps,
            never going below eps_floor. Experimental.
        momentum: heavy-ball coefficient, 0 for plain ascent.
        symmetrize: add the asset-swapped copy of every 2-asset batch.
        hidden: widths of the tanh hidden layers.
        output_scale: the network returns output_scale * softplus(z).
        init_level: initial boundary height, None for softplus(0) * scale.
    """

    iterations: int = 2000
    batch_size: int = 4096
    eps: float = 0.05
    lr: float = 0.05
    lr_schedule: LrSchedule = "decay"
    lr_decay_i0: float = 500.0
    eval_paths: int = 2_000_000
    eval_chunk: int = 65536
    seed: int = 0
    eval_seed: int | None = None
    gamma: float = 0.05
    anneal: bool = False
    anneal_factor: float = 0.5
    anneal_every: int = 500
    eps_floor: float = 0.005
    momentum: float = 0.0
    symmetrize: bool = False
    hidden: tuple[int, ...] = (64, 64)
    output_scale: float = 1.0
    init_level: float | None = None
    force_terminal: bool = True
    divergence_threshold: float = 1e8
    divergence_patience: int = 50
    log_every: int = 100

    def __post_init__(self) -> None:
        if self.iterations < 0:
            raise ValueError(f"iterations must be >= 0, got {self.iterations}")
        if self.batch_size < 1 or self.eval_paths < 1 or self.eval_chunk < 1:
            raise ValueError("batch_size, eval_paths and eval_chunk must be >= 1")
        if not self.eps > 0 or not self.eps_floor > 0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        if not self.lr > 0 or not self.lr_decay_i0 > 0:
            raise ValueError(f"learning rate must be positive, got {self.lr}")
        if self.lr_schedule not in ("constant", "decay"):
            raise ValueError(f"Unknown learning rate schedule {self.lr_schedule}")
        if not 0 <= self.momentum < 1:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")
        if not 0 < self.anneal_factor <= 1 or self.anneal_every < 1:
            raise ValueError("anneal_factor must be in (0, 1], anneal_every >= 1")
        if self.divergence_patience < 1 or self.log_every < 1:
            raise ValueError("divergence_patience and log_every must be >= 1")
        if any(h < 1 for h in self.hidden):
            raise ValueError(f"hidden widths must be >= 1, got {self.hidden}")

    @property
    def resolved_eval_seed(self) -> int:
        return self.seed if self.eval_seed is None else self.eval_seed


def learning_rate(cfg: TrainConfig, i: int) -> float:
    if cfg.lr_schedule == "decay":
        return cfg.lr / (1.0 + i / cfg.lr_decay_i0)
    return cfg.lr


def eps_at(cfg: TrainConfig, i: int) -> float:
    if not cfg.anneal:
        return cfg.eps
    return max(cfg.eps * cfg.anneal_factor ** (i // cfg.anneal_every), cfg.eps_floor)


def construct_train_config(raw: dict[str, Any]) -> TrainConfig:
    known = {f.name for f in fields(TrainConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ValueError(f"Unknown train config keys: {unknown}")
    values = dict(raw)
    if "hidden" in values:
        values["hidden"] = tuple(values["hidden"])
    return TrainConfig(**values)
