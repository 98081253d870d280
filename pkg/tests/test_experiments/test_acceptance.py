"""Desk-scale end-to-end runs. They take minutes, set NOSB_RUN_SLOW=1 to
include them."""
import json
import os
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd
import pytest

from experiments.commands import cmd_convergence_study, cmd_train, load_boundary
from experiments.run_config import RunConfig, construct_run_config

RUN_SLOW = os.getenv("NOSB_RUN_SLOW") == "1"

example_folder = Path(__file__).parents[2] / "config_files" / "examples"


def example_config(name: str, out_dir: Path, **overrides: dict[str, Any]) -> RunConfig:
    with open(example_folder / name, "r") as f:
        raw = json.load(f)
    for section, values in overrides.items():
        raw[section] = {**raw.get(section, {}), **values}
    return construct_run_config(raw, out_dir=str(out_dir))


@pytest.mark.skipif(not RUN_SLOW, reason="desk-scale run")
def test_relaxation_gap_sweep(tmp_path: Path) -> None:
    cfg = example_config(
        "desk_call_1d.json",
        tmp_path,
        study={"eps_list": [0.2, 0.1, 0.05, 0.025], "n_paths": 200_000, "j_list": [50_000]},
    )
    cmd_convergence_study(cfg, tmp_path)
    sweep = pd.read_csv(tmp_path / "eps_sweep.csv")
    assert (sweep["gap"] <= sweep["bound"] + 3 * sweep["gap_stderr"]).all()
    gaps = sweep["gap"].to_numpy()
    slack = 2 * sweep["gap_stderr"].to_numpy()
    assert (gaps[1:] <= gaps[:-1] + slack[1:] + slack[:-1]).all()


@pytest.mark.skipif(not RUN_SLOW, reason="desk-scale run")
def test_monte_carlo_error_scales_with_root_n(tmp_path: Path) -> None:
    cfg = example_config(
        "desk_call_1d.json",
        tmp_path,
        study={"eps_list": [0.05], "n_paths": 50_000, "j_list": [50_000, 200_000, 800_000]},
    )
    cmd_convergence_study(cfg, tmp_path)
    scaled = pd.read_csv(tmp_path / "j_sweep.csv")["scaled_stderr"].to_numpy()
    assert scaled.max() <= 1.2 * scaled.min()


@pytest.mark.skipif(not RUN_SLOW, reason="trains for several minutes")
def test_trained_boundary_prices_the_desk_call(tmp_path: Path) -> None:
    cfg = example_config("desk_call_1d.json", tmp_path)
    cmd_train(cfg, tmp_path)
    row = pd.read_csv(tmp_path / "evaluation.csv").iloc[0]
    oracle, mean, stderr = row["oracle_value"], row["mean"], row["stderr"]
    assert mean >= 0.995 * oracle - 3 * stderr
    # no stopping time beats the optimum
    assert mean <= oracle + 3 * stderr


@pytest.mark.skipif(not RUN_SLOW, reason="trains for several minutes")
def test_two_asset_max_call(tmp_path: Path) -> None:
    cfg = example_config("max_call_2d.json", tmp_path)
    cmd_train(cfg, tmp_path)
    row = pd.read_csv(tmp_path / "evaluation.csv").iloc[0]
    oracle, mean, stderr = row["oracle_value"], row["mean"], row["stderr"]
    assert 0.97 * oracle - 3 * stderr <= mean <= 1.003 * oracle + 3 * stderr

    g = load_boundary(str(tmp_path / "network.txt"))
    u = np.linspace(0.05, 1.0, 20)
    left = np.column_stack([np.ones_like(u), u])
    right = np.column_stack([u, np.ones_like(u)])
    for t in cfg.time_grid().dates[:-1]:
        a, b = g(t, left), g(t, right)
        level = np.mean(np.concatenate([a, b]))
        assert np.mean(np.abs(a - b)) < 0.05 * level
