"""Subcommands of run.py. Each writes CSV artifacts plus summary.json into
the output directory and returns the RunSummary.

Every headline number in a summary points at the CSV cell it was read
from, so verify_summary can check the two against each other.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import pandas as pd

from evaluation_harness.bounds import (
    fuzzy_mass,
    lipschitz_constant,
    relaxation_gap_bound,
)
from evaluation_harness.metrics import (
    boundary_table,
    empirical_modulus,
    hausdorff_epigraph,
    relaxed_linf_tk,
    sup_distance,
)
from evaluation_harness.oracle import (
    MAX_POLICY_BITS,
    DpResult,
    brute_force_policies,
    build_scenario_tree,
    european_value,
    lattice_dp,
    optimal_boundary_from_dp,
    tree_dp,
)
from experiments.run_config import ConfigError, RunConfig, dump_config
from market_env.constants import EVAL_STREAM
from market_env.lattice import build_lattice
from market_env.market import simulate_paths
from market_env.payoffs import path_rewards
from market_env.utils import PathStatistics
from stopping_agent.boundary import (
    Boundary,
    TabularBoundary,
    load_tabular_boundary,
    save_tabular_boundary,
)
from stopping_agent.convolution import inf_convolution
from stopping_agent.mlp import load_mlp, save_mlp
from stopping_agent.regions import gap_from_levels
from stopping_agent.stopping import (
    ValueEstimate,
    hitting_times,
    relaxed_weights,
    rule_path_values,
    stopped_rewards,
)
from trainer.certify import (
    Probe,
    certify_gamma_maximizer,
    fit_mlp_to_boundary,
    perturbation_probes,
    random_restart_probes,
)
from trainer.train import evaluate_trained, initial_network, train_nosb

logger = logging.getLogger("logger")

SUMMARY_FILE = "summary.json"


@dataclass(frozen=True)
class Headline:
    value: float
    file: str
    column: str
    row: int


@dataclass
class RunSummary:
    command: str
    config_hash: str
    headline: dict[str, Headline] = field(default_factory=dict)
    artifacts: list[str] = field(default_factory=list)

    def add(
        self, name: str, frame: pd.DataFrame, file: str, column: str, row: int
    ) -> None:
        self.headline[name] = Headline(float(frame[column].iloc[row]), file, column, row)

    def to_dict(self) -> dict[str, Any]:
        return {
            "command": self.command,
            "config_hash": self.config_hash,
            "headline": {
                name: {
                    "value": h.value,
                    "file": h.file,
                    "column": h.column,
                    "row": h.row,
                }
                for name, h in self.headline.items()
            },
            "artifacts": list(self.artifacts),
        }

    def save(self, out_dir: Path) -> None:
        with open(out_dir / SUMMARY_FILE, "w") as f:
            json.dump(self.to_dict(), f, indent=4)


class _Artifacts:
    """Writes CSVs into the run directory and remembers their names"""

    def __init__(self, cfg: RunConfig, command: str, out_dir: Path | str) -> None:
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        dump_config(cfg, self.out_dir)
        self.summary = RunSummary(command, cfg.config_hash(), artifacts=["config.json"])

    def path(self, name: str) -> Path:
        self.summary.artifacts.append(name)
        return self.out_dir / name

    def csv(self, frame: pd.DataFrame, name: str) -> pd.DataFrame:
        frame.to_csv(self.path(name), index=False, float_format="%.17g")
        # headline values are read back so they match the file bit for bit
        return pd.read_csv(self.out_dir / name, float_precision="round_trip")

    def finish(self) -> RunSummary:
        self.summary.artifacts.append(SUMMARY_FILE)
        self.summary.save(self.out_dir)
        for name, h in self.summary.headline.items():
            logger.info(f"[Result] {name}={h.value:.6f}")
        return self.summary


def verify_summary(out_dir: Path | str) -> list[str]:
    """Names of headline numbers that do not match their CSV cell"""
    out = Path(out_dir)
    with open(out / SUMMARY_FILE, "r") as f:
        summary = json.load(f)
    mismatched = []
    for name, h in summary["headline"].items():
        frame = pd.read_csv(out / h["file"], float_precision="round_trip")
        cell = float(frame[h["column"]].iloc[h["row"]])
        same = (np.isnan(cell) and np.isnan(h["value"])) or cell == h["value"]
        if not same:
            mismatched.append(name)
    return mismatched


def cmd_simulate(cfg: RunConfig, out_dir: Path | str) -> RunSummary:
    run = _Artifacts(cfg, "simulate", out_dir)
    params, grid, cs = cfg.market_params(), cfg.time_grid(), cfg.coordinate_system()
    paths = simulate_paths(params, grid, cfg.simulate.n_paths, cfg.seed, EVAL_STREAM)
    n_paths, n_dates, m = paths.values.shape
    stat = cfg.make_payoff().statistic(paths.values.reshape(-1, m), cs)
    stat = stat.reshape(n_paths, n_dates)
    stats: PathStatistics = {
        "date": list(grid.dates),
        "alpha_mean": stat.mean(axis=0).tolist(),
        "alpha_std": stat.std(axis=0, ddof=1).tolist() if n_paths > 1 else [0.0] * n_dates,
        "asset_mean": paths.values.mean(axis=0).tolist(),
        "asset_std": (
            paths.values.std(axis=0, ddof=1).tolist()
            if n_paths > 1
            else np.zeros((n_dates, m)).tolist()
        ),
    }
    frame = pd.DataFrame(
        {
            "date": stats["date"],
            "alpha_mean": stats["alpha_mean"],
            "alpha_std": stats["alpha_std"],
        }
    )
    frame["alpha_stderr"] = frame["alpha_std"] / np.sqrt(n_paths)
    for i in range(m):
        frame[f"asset_{i + 1}_mean"] = [row[i] for row in stats["asset_mean"]]
        frame[f"asset_{i + 1}_std"] = [row[i] for row in stats["asset_std"]]
    frame = run.csv(frame, "path_stats.csv")
    last = n_dates - 1
    run.summary.add("terminal_alpha_mean", frame, "path_stats.csv", "alpha_mean", last)
    run.summary.add("terminal_alpha_stderr", frame, "path_stats.csv", "alpha_stderr", last)
    if cfg.simulate.dump_paths:
        raw = pd.DataFrame(
            {
                "path": np.repeat(np.arange(n_paths), n_dates),
                "date": np.tile(grid.as_array(), n_paths),
            }
        )
        for i in range(m):
            raw[f"x_{i + 1}"] = paths.values[:, :, i].ravel()
        raw.to_csv(run.path("paths.csv"), index=False, float_format="%.17g")
    return run.finish()


def run_oracle(cfg: RunConfig) -> tuple[DpResult, TabularBoundary]:
    """Lattice DP and the boundary read off its exercise set"""
    lat = build_lattice(cfg.market_params(), cfg.time_grid(), cfg.oracle.steps_per_interval)
    dp = lattice_dp(lat, cfg.make_payoff(), cfg.coordinate_system())
    a_grid = np.linspace(0.0, cfg.oracle.a_max, cfg.oracle.a_points)
    boundary = optimal_boundary_from_dp(
        dp,
        cfg.coordinate_system(),
        cfg.latent_grid(),
        a_grid,
        cfg.coordinates.eta,
        cfg.coordinates.branch,
    )
    return dp, boundary


def _use_brute_force(cfg: RunConfig) -> bool:
    match cfg.oracle.brute_force:
        case "never":
            return False
        case "always":
            return True
        case _:
            widths = [
                int(np.prod([k + 1 if v > 0 else 1 for v in cfg.market_params().vol]))
                for k in range(cfg.grid.n_dates - 1)
            ]
            return sum(widths) <= MAX_POLICY_BITS


def cmd_oracle(cfg: RunConfig, out_dir: Path | str) -> RunSummary:
    run = _Artifacts(cfg, "oracle", out_dir)
    payoff, cs = cfg.make_payoff(), cfg.coordinate_system()
    dp, boundary = run_oracle(cfg)
    assert dp.lattice is not None
    rows = [
        {"method": "lattice_dp", "value": dp.root_value},
        {"method": "lattice_european", "value": european_value(dp.lattice, payoff, cs)},
    ]
    if _use_brute_force(cfg):
        tree = build_scenario_tree(cfg.market_params(), cfg.time_grid())
        rows.append({"method": "tree_dp", "value": tree_dp(tree, payoff, cs).root_value})
        rows.append(
            {"method": "brute_force", "value": brute_force_policies(tree, payoff, cs).value}
        )
    frame = run.csv(pd.DataFrame(rows), "oracle_values.csv")
    for row, method in enumerate(frame["method"]):
        run.summary.add(f"v_{method}", frame, "oracle_values.csv", "value", row)
    if cfg.oracle.write_tables:
        dp.save_csv(run.path("dp_tables.csv"))
    save_tabular_boundary(boundary, run.path("boundary_oracle.csv"))
    return run.finish()


def cmd_train(cfg: RunConfig, out_dir: Path | str) -> RunSummary:
    run = _Artifacts(cfg, "train", out_dir)
    params, grid = cfg.market_params(), cfg.time_grid()
    payoff, cs, eta = cfg.make_payoff(), cfg.coordinate_system(), cfg.coordinates.eta
    net = initial_network(cfg.train, grid, cs)
    net, log = train_nosb(cfg.train, params, grid, payoff, cs, eta, net)
    save_mlp(net, run.path("network.txt"))
    log.save_csv(run.path("train_log.csv"))
    log.save_timing(run.path("train_timing.csv"))
    est = evaluate_trained(
        net,
        cfg.train.eval_paths,
        cfg.train.resolved_eval_seed,
        params,
        grid,
        payoff,
        cs,
        eta,
        cfg.train.force_terminal,
        cfg.train.eval_chunk,
    )
    row: dict[str, float] = {"mean": est.mean, "stderr": est.stderr, "n": est.n}
    oracle_boundary = None
    if cfg.oracle.enabled:
        dp, oracle_boundary = run_oracle(cfg)
        row["oracle_value"] = dp.root_value
        row["oracle_gap"] = dp.root_value - est.mean
    frame = run.csv(pd.DataFrame([row]), "evaluation.csv")
    for column in row:
        if column != "n":
            run.summary.add(column, frame, "evaluation.csv", column, 0)

    probes: list[Probe] = []
    cert = cfg.certify
    if cert.restarts:
        probes += random_restart_probes(cfg.train, net, cert.restarts, cfg.seed + 1)
    if cert.perturbations:
        probes += perturbation_probes(
            net, cert.perturbations, cert.perturb_scale, cfg.seed + 2
        )
    if cert.fit_oracle and oracle_boundary is not None:
        probes.append(Probe("oracle_fit", fit_mlp_to_boundary(oracle_boundary, net)))
    report = certify_gamma_maximizer(
        net, cfg.train, probes, params, grid, payoff, cs, eta, cert.n_paths
    )
    certificate = {
        "trained_relaxed": report.trained.mean,
        "gap": report.gap,
        "gamma": report.gamma,
        "satisfied": int(report.satisfied),
        "vacuous": int(report.vacuous),
    }
    frame = run.csv(pd.DataFrame([certificate]), "certificate.csv")
    run.summary.add("certificate_gap", frame, "certificate.csv", "gap", 0)
    return run.finish()


def load_boundary(path: str) -> Boundary:
    if path.endswith(".csv"):
        return load_tabular_boundary(path)
    return load_mlp(path)


def cmd_metrics(
    cfg: RunConfig, out_dir: Path | str, boundary_files: Sequence[str] = ()
) -> RunSummary:
    run = _Artifacts(cfg, "metrics", out_dir)
    files = list(cfg.metrics.boundaries) + list(boundary_files)
    if not files:
        raise ConfigError("metrics needs at least one boundary file")
    try:
        boundaries = [load_boundary(f) for f in files]
    except FileNotFoundError as e:
        raise ConfigError(f"Boundary file not found: {e.filename}") from e
    tabular = [b for b in boundaries if isinstance(b, TabularBoundary)]
    if tabular:
        dates, xi_grid = tabular[0].dates, tabular[0].xi_grid
        for b in tabular[1:]:
            if b.dates != dates or not b.xi_grid.same_as(xi_grid):
                raise ConfigError("Boundary files are on incompatible grids")
    else:
        dates, xi_grid = cfg.time_grid().dates, cfg.latent_grid()

    a_step = cfg.oracle.a_max / max(cfg.oracle.a_points - 1, 1)
    distance_rows = []
    profile_rows = []
    for i in range(len(files)):
        for j in range(i, len(files)):
            f, g = boundaries[i], boundaries[j]
            row: dict[str, Any] = {
                "left": files[i],
                "right": files[j],
                "sup": sup_distance(f, g, dates, xi_grid),
            }
            if cfg.metrics.hausdorff:
                cap = _a_cap(cfg, [f, g], dates, xi_grid)
                row["hausdorff"] = max(
                    hausdorff_epigraph(f, g, t, xi_grid, cap, a_step)
                    for t in dates
                )
            distance_rows.append(row)
            profile = relaxed_linf_tk(f, g, dates, xi_grid, cfg.metrics.r_list)
            for r, value in zip(profile.r_values, profile.distances):
                profile_rows.append(
                    {"left": files[i], "right": files[j], "r": r, "value": value}
                )
    frame = run.csv(pd.DataFrame(distance_rows), "distances.csv")
    worst = int(frame["sup"].to_numpy().argmax())
    run.summary.add("max_sup", frame, "distances.csv", "sup", worst)
    run.csv(pd.DataFrame(profile_rows), "profiles.csv")

    if cfg.metrics.deltas:
        conv_rows = []
        for name, b in zip(files, boundaries):
            for delta in cfg.metrics.deltas:
                env = inf_convolution(b, delta, xi_grid, dates).boundary
                profile = relaxed_linf_tk(b, env, dates, xi_grid, cfg.metrics.r_list)
                for r, value in zip(profile.r_values, profile.distances):
                    conv_rows.append(
                        {"boundary": name, "delta": delta, "r": r, "value": value}
                    )
        run.csv(pd.DataFrame(conv_rows), "convolution_profiles.csv")

    if cfg.metrics.iotas:
        paths = simulate_paths(
            cfg.market_params(),
            cfg.time_grid(),
            cfg.metrics.modulus_paths,
            cfg.seed,
            EVAL_STREAM,
        )
        stat = _alpha_samples(cfg, paths.values)
        table = empirical_modulus(stat, cfg.metrics.iotas, cfg.time_grid().dates)
        run.csv(table.to_frame(), "modulus.csv")
    return run.finish()


def _a_cap(
    cfg: RunConfig, pair: list[Boundary], dates: Sequence[float], xi_grid: Any
) -> float:
    if cfg.metrics.a_cap is not None:
        return cfg.metrics.a_cap
    values = np.concatenate([boundary_table(b, dates, xi_grid).ravel() for b in pair])
    finite = values[np.isfinite(values)]
    return float(1.5 * finite.max()) if finite.size and finite.max() > 0 else 1.0


def _alpha_samples(cfg: RunConfig, values: np.ndarray) -> np.ndarray:
    n_paths, n_dates, m = values.shape
    stat = cfg.coordinate_system().alpha(values.reshape(-1, m))
    return np.asarray(stat.reshape(n_paths, n_dates))


def _study_boundary(cfg: RunConfig) -> Boundary:
    if cfg.study.boundary == "oracle":
        return run_oracle(cfg)[1]
    try:
        return load_boundary(cfg.study.boundary)
    except FileNotFoundError as e:
        raise ConfigError(f"Boundary file not found: {cfg.study.boundary}") from e


def cmd_convergence_study(cfg: RunConfig, out_dir: Path | str) -> RunSummary:
    run = _Artifacts(cfg, "convergence-study", out_dir)
    params, grid = cfg.market_params(), cfg.time_grid()
    payoff, cs, eta = cfg.make_payoff(), cfg.coordinate_system(), cfg.coordinates.eta
    f = _study_boundary(cfg)

    paths = simulate_paths(params, grid, cfg.study.n_paths, cfg.seed, EVAL_STREAM)
    rewards = path_rewards(payoff, paths.values, grid.as_array(), cs)
    strict = stopped_rewards(hitting_times(f, paths, cs, eta), rewards)
    strict_est = ValueEstimate.from_samples(strict)
    lipschitz = lipschitz_constant(rewards)
    modulus = empirical_modulus(
        _alpha_samples(cfg, paths.values), cfg.study.eps_list, grid.dates
    )
    x0 = paths.values[:1, 0, :]
    gap0 = float(gap_from_levels(f(0.0, cs.xi(x0)), cs.alpha(x0), eta)[0])

    eps_rows = []
    for eps in cfg.study.eps_list:
        relaxed = rule_path_values(relaxed_weights(f, eps, paths, cs, eta), rewards)
        relaxed_est = ValueEstimate.from_samples(relaxed)
        diff = ValueEstimate.from_samples(relaxed - strict)
        in_band = 0 < gap0 <= eps
        eps_rows.append(
            {
                "eps": eps,
                "relaxed": relaxed_est.mean,
                "relaxed_stderr": relaxed_est.stderr,
                "strict": strict_est.mean,
                "strict_stderr": strict_est.stderr,
                "gap": abs(diff.mean),
                "gap_stderr": diff.stderr,
                "rho": fuzzy_mass(modulus, eps, in_band),
                "bound": relaxation_gap_bound(lipschitz, modulus, eps, in_band),
            }
        )
    eps_frame = run.csv(pd.DataFrame(eps_rows), "eps_sweep.csv")
    run.summary.add("strict_value", eps_frame, "eps_sweep.csv", "strict", 0)
    run.summary.add("smallest_eps_gap", eps_frame, "eps_sweep.csv", "gap", len(eps_rows) - 1)

    j_rows = []
    for n in cfg.study.j_list:
        est = _strict_estimate(cfg, f, n)
        j_rows.append(
            {
                "J": n,
                "mean": est.mean,
                "stderr": est.stderr,
                "scaled_stderr": est.stderr * np.sqrt(n),
            }
        )
    j_frame = run.csv(pd.DataFrame(j_rows), "j_sweep.csv")
    run.summary.add("largest_J_stderr", j_frame, "j_sweep.csv", "stderr", len(j_rows) - 1)
    return run.finish()


def _strict_estimate(cfg: RunConfig, f: Boundary, n_paths: int) -> ValueEstimate:
    paths = simulate_paths(
        cfg.market_params(), cfg.time_grid(), n_paths, cfg.seed, EVAL_STREAM
    )
    rewards = path_rewards(
        cfg.make_payoff(), paths.values, paths.grid.as_array(), cfg.coordinate_system()
    )
    tau = hitting_times(f, paths, cfg.coordinate_system(), cfg.coordinates.eta)
    return ValueEstimate.from_samples(stopped_rewards(tau, rewards))


