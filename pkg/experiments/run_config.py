"""Run configuration: one JSON file, one frozen dataclass per section.

Every section is type-checked against its annotations with beartype when
it is built, unknown keys are rejected, and the resolved config (all
defaults filled in) is written next to the results.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Literal, TypeVar, get_type_hints

from beartype.door import is_bearable

from market_env.constants import CoordinateKind, PayoffKind
from market_env.coordinates import CoordinateSystem, as_orientation
from market_env.market import MarketParams, TimeGrid, build_time_grid
from market_env.payoffs import Payoff, make_payoff
from stopping_agent.boundary import XiGrid
from trainer.train_config import TrainConfig

logger = logging.getLogger("logger")

S = TypeVar("S")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class MarketSection:
    """Scalars apply to every asset; correlation may be one rho for every
    pair or a full matrix"""

    n_assets: int = 1
    spot: float | tuple[float, ...] = 100.0
    rate: float = 0.05
    dividend: float | tuple[float, ...] = 0.10
    vol: float | tuple[float, ...] = 0.2
    correlation: float | tuple[tuple[float, ...], ...] = 0.0


@dataclass(frozen=True)
class GridSection:
    horizon: float = 1.0
    n_dates: int = 10


@dataclass(frozen=True)
class PayoffSection:
    kind: PayoffKind = "max_call"
    strike: float = 100.0


@dataclass(frozen=True)
class CoordinatesSection:
    kind: CoordinateKind = "max_call_coords"
    eta: int = 1
    branch: int = 1


@dataclass(frozen=True)
class OracleSection:
    """Lattice oracle and the grids the boundary is read on.

    xi_low / xi_high / xi_points span each latent axis; for max-call
    coordinates box points are projected onto E before use.
    """

    enabled: bool = True
    steps_per_interval: int = 500
    brute_force: Literal["auto", "always", "never"] = "auto"
    a_max: float = 300.0
    a_points: int = 3001
    xi_low: float = 0.05
    xi_high: float = 1.0
    xi_points: int = 21
    write_tables: bool = True


@dataclass(frozen=True)
class MetricsSection:
    boundaries: tuple[str, ...] = ()
    r_list: tuple[float, ...] = (0.5, 0.2, 0.1, 0.05)
    deltas: tuple[float, ...] = ()
    hausdorff: bool = True
    a_cap: float | None = None
    iotas: tuple[float, ...] = ()
    modulus_paths: int = 100_000


@dataclass(frozen=True)
class StudySection:
    """boundary is "oracle" or the path of a boundary file"""

    boundary: str = "oracle"
    eps_list: tuple[float, ...] = (0.2, 0.1, 0.05, 0.025)
    n_paths: int = 200_000
    j_list: tuple[int, ...] = (50_000, 200_000, 800_000)


@dataclass(frozen=True)
class SimulateSection:
    n_paths: int = 200_000
    dump_paths: bool = False


@dataclass(frozen=True)
class CertifySection:
    restarts: int = 0
    perturbations: int = 0
    perturb_scale: float = 0.05
    fit_oracle: bool = False
    n_paths: int | None = None


@dataclass(frozen=True)
class RunConfig:
    market: MarketSection = field(default_factory=MarketSection)
    grid: GridSection = field(default_factory=GridSection)
    payoff: PayoffSection = field(default_factory=PayoffSection)
    coordinates: CoordinatesSection = field(default_factory=CoordinatesSection)
    train: TrainConfig = field(default_factory=TrainConfig)
    oracle: OracleSection = field(default_factory=OracleSection)
    metrics: MetricsSection = field(default_factory=MetricsSection)
    study: StudySection = field(default_factory=StudySection)
    simulate: SimulateSection = field(default_factory=SimulateSection)
    certify: CertifySection = field(default_factory=CertifySection)
    seed: int = 0
    out_dir: str = "results"

    def market_params(self) -> MarketParams:
        m = self.market
        n = m.n_assets

        def per_asset(value: float | tuple[float, ...], name: str) -> tuple[float, ...]:
            if isinstance(value, tuple):
                if len(value) != n:
                    raise ConfigError(f"market.{name} needs {n} entries")
                return value
            return (value,) * n

        if isinstance(m.correlation, tuple):
            corr = m.correlation
        else:
            corr = tuple(
                tuple(1.0 if i == j else m.correlation for j in range(n))
                for i in range(n)
            )
        return MarketParams(
            spot=per_asset(m.spot, "spot"),
            rate=m.rate,
            dividend=per_asset(m.dividend, "dividend"),
            vol=per_asset(m.vol, "vol"),
            correlation=corr,
        )

    def time_grid(self) -> TimeGrid:
        return build_time_grid(self.grid.horizon, self.grid.n_dates)

    def make_payoff(self) -> Payoff:
        return make_payoff(self.payoff.kind, self.payoff.strike, self.market.rate)

    def coordinate_system(self) -> CoordinateSystem:
        return CoordinateSystem(self.coordinates.kind, self.market.n_assets)

    def latent_grid(self) -> XiGrid:
        cs = self.coordinate_system()
        o = self.oracle
        if cs.kind == "max_call_coords" and cs.n_assets == 1:
            return XiGrid.uniform(1.0, 1.0, 1)
        if cs.kind == "min_call_2d_coords":
            return XiGrid.uniform(1.0, max(o.xi_high, 1.0), o.xi_points)
        return XiGrid.box(
            [o.xi_low] * cs.xi_dim, [o.xi_high] * cs.xi_dim, [o.xi_points] * cs.xi_dim
        )

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    def config_hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _tuples(value: Any) -> Any:
    if isinstance(value, list):
        return tuple(_tuples(v) for v in value)
    return value


def _floats(value: Any) -> Any:
    if isinstance(value, tuple):
        return tuple(_floats(v) for v in value)
    if isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    return value


def construct_section(cls: type[S], raw: Any, name: str) -> S:
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"[{name}] must be an object, got {type(raw).__name__}")
    hints = get_type_hints(cls)
    unknown = sorted(set(raw) - set(hints))
    if unknown:
        raise ConfigError(f"[{name}] unknown keys {unknown}")
    values = {}
    for key, value in raw.items():
        value = _tuples(value)
        if not is_bearable(value, hints[key]):
            # JSON writes 1.0 as 1
            value = _floats(value)
        if not is_bearable(value, hints[key]):
            raise ConfigError(
                f"[{name}] {key}={value!r} does not match {hints[key]}"
            )
        values[key] = value
    try:
        return cls(**values)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"[{name}] {e}") from e


SECTIONS: dict[str, type] = {
    "market": MarketSection,
    "grid": GridSection,
    "payoff": PayoffSection,
    "coordinates": CoordinatesSection,
    "train": TrainConfig,
    "oracle": OracleSection,
    "metrics": MetricsSection,
    "study": StudySection,
    "simulate": SimulateSection,
    "certify": CertifySection,
}


def construct_run_config(
    raw: dict[str, Any],
    seed: int | None = None,
    out_dir: str | None = None,
) -> RunConfig:
    """Build a RunConfig; seed and out_dir override the file.

    The train seed follows the run seed unless the train section sets one.
    """
    unknown = sorted(set(raw) - set(SECTIONS) - {"seed", "out_dir"})
    if unknown:
        raise ConfigError(f"Unknown config sections {unknown}")
    run_seed = raw.get("seed", 0) if seed is None else seed
    if not isinstance(run_seed, int) or isinstance(run_seed, bool) or run_seed < 0:
        raise ConfigError(f"seed must be a nonnegative integer, got {run_seed!r}")
    sections = {}
    for name, cls in SECTIONS.items():
        section_raw = raw.get(name)
        if name == "train" and (section_raw is None or isinstance(section_raw, dict)):
            section_raw = dict(section_raw or {})
            if seed is not None or "seed" not in section_raw:
                section_raw["seed"] = run_seed
        sections[name] = construct_section(cls, section_raw, name)
    cfg = RunConfig(
        **sections,
        seed=run_seed,
        out_dir=str(out_dir if out_dir is not None else raw.get("out_dir", "results")),
    )
    try:
        cfg.market_params()
        cfg.time_grid()
        cfg.make_payoff()
        cfg.coordinate_system()
        as_orientation(cfg.coordinates.eta)
        if cfg.coordinates.branch not in (1, 2):
            raise ValueError(
                f"coordinates.branch must be 1 or 2, got {cfg.coordinates.branch}"
            )
    except ValueError as e:
        raise ConfigError(str(e)) from e
    return cfg


def load_run_config(
    path: Path | str, seed: int | None = None, out_dir: str | None = None
) -> RunConfig:
    try:
        with open(path, "r") as f:
            raw = json.load(f)
    except FileNotFoundError as e:
        raise ConfigError(f"Config file {path} not found") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"Config file {path} is not valid JSON: {e}") from e
    if not isinstance(raw, dict):
        raise ConfigError(f"Config file {path} must hold a JSON object")
    logger.info(f"[Config file]: {path}")
    return construct_run_config(raw, seed, out_dir)


def dump_config(cfg: RunConfig, out_dir: Path | str) -> Path:
    path = Path(out_dir) / "config.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(cfg.to_dict(), f, indent=4, sort_keys=True)
    return path
