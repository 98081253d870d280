"""Script to run optimal stopping boundary experiments from a JSON config"""
import argparse
import logging
import os
import random
import sys
import time
from pathlib import Path

from evaluation_harness.oracle import GuardExceededError
from experiments.commands import (
    cmd_convergence_study,
    cmd_metrics,
    cmd_oracle,
    cmd_simulate,
    cmd_train,
)
from experiments.run_config import ConfigError, RunConfig, load_run_config
from market_env.lattice import LatticeError
from stopping_agent.mlp import NonFiniteError
from trainer.train import DivergenceError

LOG_FOLDER = "log_files"
Path(LOG_FOLDER).mkdir(parents=True, exist_ok=True)
LOG_FILE_NAME = f"{LOG_FOLDER}/log_{time.strftime('%Y%m%d%H%M%S', time.localtime())}_{random.randint(0, 10000)}.log"

logger = logging.getLogger("logger")
logger.setLevel(logging.INFO)

console_handler = logging.StreamHandler()
console_handler.setLevel(logging.DEBUG)
logger.addHandler(console_handler)

file_handler = logging.FileHandler(LOG_FILE_NAME)
file_handler.setLevel(logging.DEBUG)
logger.addHandler(file_handler)

# Set the log format
formatter = logging.Formatter("%(asctime)s - %(levelname)s - %(message)s")
console_handler.setFormatter(formatter)
file_handler.setFormatter(formatter)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_GUARD = 3
EXIT_IO = 4

COMMANDS = ("simulate", "oracle", "train", "metrics", "convergence-study")


def config(argv: list[str] | None = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(
        description="Train and verify neural optimal stopping boundaries"
    )
    parser.add_argument("command", choices=COMMANDS, help="Subcommand to run")
    parser.add_argument(
        "boundaries",
        nargs="*",
        help="Boundary files (.csv tabular or network text) for metrics",
    )
    parser.add_argument(
        "--config", required=True, help="Path to the JSON run config"
    )
    parser.add_argument(
        "--out", default=None, help="Output directory, overrides out_dir"
    )
    parser.add_argument(
        "--seed", type=int, default=None, help="Seed, overrides the config"
    )
    return parser.parse_args(argv)


def prepare(cfg: RunConfig) -> Path:
    result_dir = Path(cfg.out_dir)
    if not result_dir.exists():
        result_dir.mkdir(parents=True, exist_ok=True)
        logger.info(f"Create result dir: {result_dir}")

    # log the log file
    with open(os.path.join(result_dir, "log_files.txt"), "a+") as f:
        f.write(f"{LOG_FILE_NAME}\n")
    return result_dir


def dispatch(args: argparse.Namespace) -> None:
    cfg = load_run_config(args.config, seed=args.seed, out_dir=args.out)
    result_dir = prepare(cfg)
    match args.command:
        case "simulate":
            cmd_simulate(cfg, result_dir)
        case "oracle":
            cmd_oracle(cfg, result_dir)
        case "train":
            cmd_train(cfg, result_dir)
        case "metrics":
            cmd_metrics(cfg, result_dir, args.boundaries)
        case "convergence-study":
            cmd_convergence_study(cfg, result_dir)
    logger.info(f"[Result] {args.command} finished, artifacts in {result_dir}")


def main(argv: list[str] | None = None) -> int:
    args = config(argv)
    try:
        dispatch(args)
    except ConfigError as e:
        logger.error(f"[Config error] {e}")
        return EXIT_CONFIG
    except (
        GuardExceededError,
        DivergenceError,
        NonFiniteError,
        LatticeError,
    ) as e:
        logger.error(f"[Guard] {type(e).__name__}: {e}")
        return EXIT_GUARD
    except OSError as e:
        logger.error(f"[I/O error] {e}")
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
