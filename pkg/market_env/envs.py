from typing import Any

import numpy as np
from beartype import beartype
from gymnasium import Env
from gymnasium.spaces import Box, Discrete

from market_env.coordinates import CoordinateSystem
from market_env.market import PathBatch
from market_env.payoffs import Payoff, reward
from market_env.utils import FloatArray

CONTINUE = 0
STOP = 1


class StoppingEnv(Env[FloatArray, int]):
    """
    Replays simulated paths as stopping episodes.
    The observation is (t, x_1, ..., x_m); action 1 stops and collects
    phi(t, x), action 0 moves to the next date. Continuing past the last
    date ends the episode with reward 0, unless force_terminal is set, in
    which case the last date always pays out.
    """

    @beartype
    def __init__(
        self,
        paths: PathBatch,
        payoff: Payoff,
        cs: CoordinateSystem | None = None,
        force_terminal: bool = True,
    ) -> None:
        self.paths = paths
        self.payoff = payoff
        self.cs = cs
        self.force_terminal = force_terminal
        self.dates = paths.grid.as_array()
        self.action_space = Discrete(2)  # type: ignore[assignment]
        self.observation_space = Box(  # type: ignore[assignment]
            low=0.0,
            high=np.inf,
            shape=(paths.n_assets + 1,),
            dtype=np.float64,
        )
        self.path_index = 0
        self.date_index = 0
        self.next_path = 0

    def _obs(self) -> FloatArray:
        x = self.paths.values[self.path_index, self.date_index]
        return np.concatenate([[self.dates[self.date_index]], x])

    def _reward(self) -> float:
        x = self.paths.values[self.path_index, self.date_index]
        t = self.dates[self.date_index]
        return float(reward(self.payoff, x[None, :], t, self.cs)[0])

    def reset(
        self,
        *,
        seed: int | None = None,
        options: dict[str, Any] | None = None,
    ) -> tuple[FloatArray, dict[str, Any]]:
        super().reset(seed=seed)
        if options is not None and "path_index" in options:
            self.path_index = int(options["path_index"])
        else:
            self.path_index = self.next_path
        if not 0 <= self.path_index < self.paths.n_paths:
            raise ValueError(
                f"path_index {self.path_index} out of range "
                f"[0, {self.paths.n_paths})"
            )
        self.next_path = (self.path_index + 1) % self.paths.n_paths
        self.date_index = 0
        return self._obs(), {"date_index": 0}

    def step(
        self, action: int
    ) -> tuple[FloatArray, float, bool, bool, dict[str, Any]]:
        last = self.date_index == self.paths.n_dates - 1
        if action == STOP or (last and self.force_terminal):
            info = {"date_index": self.date_index, "stopped": True}
            return self._obs(), self._reward(), True, False, info
        if action != CONTINUE:
            raise ValueError(f"Unknown action {action}")
        if last:
            info = {"date_index": self.date_index, "stopped": False}
            return self._obs(), 0.0, True, False, info
        self.date_index += 1
        return self._obs(), 0.0, False, False, {"date_index": self.date_index}
