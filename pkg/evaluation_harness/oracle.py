"""Exact small-scale references for optimal stopping.

Discounted rewards phi(t, x) = exp(-r t) (stat - strike)^+ are already
expressed in time-0 money, so under the risk-neutral transition the
continuation value is a plain conditional expectation.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd
from beartype import beartype
from scipy import integrate
from scipy.stats import norm
from tqdm import tqdm

from market_env.coordinates import CoordinateSystem
from market_env.lattice import Lattice, build_lattice
from market_env.market import MarketParams, TimeGrid
from market_env.payoffs import Payoff, payoff_eval, reward
from market_env.utils import BoolArray, FloatArray, IntArray, Real
from stopping_agent.boundary import TabularBoundary, XiGrid
from stopping_agent.extraction import extract_boundary
from stopping_agent.stopping import RelaxedRule, weights_from_intensities

logger = logging.getLogger("logger")

EXERCISE_TOL = 1e-12
MAX_POLICY_BITS = 20
MAX_TREE_PATHS = 1 << 20
MAX_NONRECOMBINING_DATES = 4
POLICY_CHUNK = 4096


class GuardExceededError(RuntimeError):
    pass


@dataclass(frozen=True)
class ScenarioTree:
    """A finite tree over the dates of a grid.

    states[k] holds the node states at date k, shape (n_k, m).
    children[k][j] lists the node indices at date k + 1 reachable from node
    j at date k, with probabilities child_probs[k][j].
    """

    grid: TimeGrid
    states: tuple[FloatArray, ...]
    children: tuple[IntArray, ...]
    child_probs: tuple[FloatArray, ...]

    def __post_init__(self) -> None:
        if len(self.states) != len(self.grid):
            raise ValueError("One state array per date is required")
        if self.states[0].shape[0] != 1:
            raise ValueError("A scenario tree has a single root")
        if len(self.children) != len(self.grid) - 1:
            raise ValueError("Children are needed for every non-final date")
        for k, (ch, pr) in enumerate(zip(self.children, self.child_probs)):
            if ch.shape != pr.shape or ch.shape[0] != self.states[k].shape[0]:
                raise ValueError(f"Malformed children at date {k}")
            if np.any(ch < 0) or np.any(ch >= self.states[k + 1].shape[0]):
                raise ValueError(f"Child index out of range at date {k}")
            if np.any(np.abs(pr.sum(axis=1) - 1.0) > 1e-12):
                raise ValueError(
                    f"Child probabilities do not sum to 1 at date {k}"
                )

    @property
    def n_dates(self) -> int:
        return len(self.grid)

    @property
    def n_assets(self) -> int:
        return int(self.states[0].shape[1])

    def n_nodes(self, k: int) -> int:
        return int(self.states[k].shape[0])

    @classmethod
    def from_lattice(cls, lat: Lattice) -> "ScenarioTree":
        """The recombining tree of a lattice with one step per date"""
        if lat.steps_per_interval != 1:
            raise ValueError(
                "Only lattices with one step per interval map onto a tree"
            )
        states = []
        children = []
        probs = []
        for k in range(len(lat.grid)):
            states.append(lat.states_at_step(k).reshape(-1, lat.n_assets))
        for k in range(len(lat.grid) - 1):
            here = lat.axis_width(k)
            there = lat.axis_width(k + 1)
            moves = [
                (0, 1) if lat.branching[i] else (0,)
                for i in range(lat.n_assets)
            ]
            ch = []
            pr = []
            for idx in np.ndindex(*here):
                kids = []
                weights = []
                for move in itertools.product(*moves):
                    target = tuple(j + d for j, d in zip(idx, move))
                    kids.append(int(np.ravel_multi_index(target, there)))
                    w = 1.0
                    for i, d in enumerate(move):
                        if lat.branching[i]:
                            w *= lat.prob[i] if d else 1.0 - lat.prob[i]
                    weights.append(w)
                ch.append(kids)
                pr.append(weights)
            children.append(np.asarray(ch, dtype=np.int64))
            probs.append(np.asarray(pr, dtype=np.float64))
        return cls(lat.grid, tuple(states), tuple(children), tuple(probs))

    def expand(self) -> "ScenarioTree":
        """The equivalent non-recombining tree (one node per path prefix)"""
        if self.n_dates > MAX_NONRECOMBINING_DATES:
            raise GuardExceededError(
                f"Non-recombining trees are limited to "
                f"{MAX_NONRECOMBINING_DATES} dates, got {self.n_dates}"
            )
        origin = [np.zeros(1, dtype=np.int64)]
        states = [self.states[0]]
        children = []
        probs = []
        for k in range(self.n_dates - 1):
            parents = origin[-1]
            ch = self.children[k][parents]
            pr = self.child_probs[k][parents]
            n_new = ch.size
            children.append(np.arange(n_new, dtype=np.int64).reshape(ch.shape))
            probs.append(pr)
            origin.append(ch.ravel())
            states.append(self.states[k + 1][ch.ravel()])
        return ScenarioTree(self.grid, tuple(states), tuple(children), tuple(probs))

    def enumerate_paths(self) -> tuple[IntArray, FloatArray]:
        """(node index per path and date (P, K), path probability (P,))"""
        nodes = np.zeros((1, 1), dtype=np.int64)
        prob = np.ones(1)
        for k in range(self.n_dates - 1):
            last = nodes[:, -1]
            ch = self.children[k][last]
            pr = self.child_probs[k][last]
            width = ch.shape[1]
            if nodes.shape[0] * width > MAX_TREE_PATHS:
                raise GuardExceededError(
                    f"Tree has more than {MAX_TREE_PATHS} paths"
                )
            nodes = np.concatenate(
                [np.repeat(nodes, width, axis=0), ch.reshape(-1, 1)], axis=1
            )
            prob = (prob[:, None] * pr).ravel()
        return nodes, prob

    def node_rewards(
        self, payoff: Payoff, cs: CoordinateSystem | None = None
    ) -> list[FloatArray]:
        return [
            reward(payoff, self.states[k], t, cs)
            for k, t in enumerate(self.grid.dates)
        ]


@beartype
def build_scenario_tree(
    params: MarketParams, grid: TimeGrid, recombining: bool = True
) -> ScenarioTree:
    tree = ScenarioTree.from_lattice(build_lattice(params, grid, 1))
    return tree if recombining else tree.expand()


@dataclass
class DpResult:
    """values[k] and exercise[k] share the node layout of states[k]"""

    dates: tuple[float, ...]
    states: list[FloatArray]
    values: list[FloatArray]
    exercise: list[BoolArray]
    lattice: Lattice | None = field(default=None, repr=False)

    @property
    def root_value(self) -> float:
        return float(self.values[0].ravel()[0])

    def to_frame(self) -> pd.DataFrame:
        frames = []
        for k, t in enumerate(self.dates):
            m = self.states[k].shape[-1]
            flat = self.states[k].reshape(-1, m)
            frame = pd.DataFrame({f"x_{i + 1}": flat[:, i] for i in range(m)})
            frame.insert(0, "date", t)
            frame["value"] = self.values[k].ravel()
            frame["exercise"] = self.exercise[k].ravel().astype(int)
            frames.append(frame)
        return pd.concat(frames, ignore_index=True)

    def save_csv(self, path: Path | str) -> None:
        self.to_frame().to_csv(path, index=False, float_format="%.17g")


def _exercise_flags(phi: FloatArray, cont: FloatArray) -> BoolArray:
    # exercise exactly where the value equals the reward
    return np.asarray(phi >= cont - EXERCISE_TOL)


@beartype
def lattice_dp(
    lat: Lattice, payoff: Payoff, cs: CoordinateSystem | None = None
) -> DpResult:
    n_dates = len(lat.grid)
    states: list[FloatArray] = [np.zeros(0)] * n_dates
    values: list[FloatArray] = [np.zeros(0)] * n_dates
    exercise: list[BoolArray] = [np.zeros(0, dtype=bool)] * n_dates

    k = n_dates - 1
    x = lat.states_at_step(lat.n_steps)
    phi = _node_rewards(payoff, x, lat.grid.dates[k], cs)
    value = phi
    states[k], values[k] = x, value
    exercise[k] = np.ones(phi.shape, dtype=bool)
    for n in range(lat.n_steps - 1, -1, -1):
        cont = lat.expectation(value)
        if n % lat.steps_per_interval:
            value = cont
            continue
        k = n // lat.steps_per_interval
        x = lat.states_at_step(n)
        phi = _node_rewards(payoff, x, lat.grid.dates[k], cs)
        value = np.maximum(phi, cont)
        states[k], values[k] = x, value
        exercise[k] = _exercise_flags(phi, cont)
    logger.info(f"[Oracle] lattice_dp root value {float(values[0].ravel()[0]):.6f}")
    return DpResult(lat.grid.dates, states, values, exercise, lat)


def _node_rewards(
    payoff: Payoff, x: FloatArray, t: float, cs: CoordinateSystem | None
) -> FloatArray:
    shape = x.shape[:-1]
    return reward(payoff, x.reshape(-1, x.shape[-1]), t, cs).reshape(shape)


@beartype
def european_value(
    lat: Lattice, payoff: Payoff, cs: CoordinateSystem | None = None
) -> float:
    """Value of stopping at the last date only"""
    value = _node_rewards(
        payoff, lat.states_at_step(lat.n_steps), lat.grid.horizon, cs
    )
    for _ in range(lat.n_steps):
        value = lat.expectation(value)
    return float(value.ravel()[0])


@beartype
def lognormal_european_value(
    params: MarketParams, payoff: Payoff, horizon: Real
) -> float:
    """exp(-r T) E[(X_T - strike)^+] for one lognormal asset, by quadrature"""
    if params.n_assets != 1:
        raise ValueError("The quadrature reference covers one asset only")
    x0, q, vol = params.spot[0], params.dividend[0], params.vol[0]
    T = float(horizon)
    drift = (params.rate - q - 0.5 * vol**2) * T
    if vol == 0.0 or T == 0.0:
        return float(payoff_eval(payoff, x0 * np.exp(drift), T))
    scale = vol * np.sqrt(T)
    z_star = (np.log(payoff.strike / x0) - drift) / scale

    def integrand(z: float) -> float:
        x = x0 * np.exp(drift + scale * z)
        return float(payoff_eval(payoff, x, T) * norm.pdf(z))

    value, _ = integrate.quad(integrand, z_star, np.inf, epsabs=1e-12, limit=200)
    return float(value)


@beartype
def tree_dp(
    tree: ScenarioTree, payoff: Payoff, cs: CoordinateSystem | None = None
) -> DpResult:
    rewards = tree.node_rewards(payoff, cs)
    K = tree.n_dates
    values: list[FloatArray] = [np.zeros(0)] * K
    exercise: list[BoolArray] = [np.zeros(0, dtype=bool)] * K
    values[K - 1] = rewards[K - 1]
    exercise[K - 1] = np.ones(tree.n_nodes(K - 1), dtype=bool)
    for k in range(K - 2, -1, -1):
        cont = (tree.child_probs[k] * values[k + 1][tree.children[k]]).sum(axis=1)
        values[k] = np.maximum(rewards[k], cont)
        exercise[k] = _exercise_flags(rewards[k], cont)
    return DpResult(tree.grid.dates, list(tree.states), values, exercise)


@dataclass(frozen=True)
class PolicyResult:
    value: float
    # stop[k][j]: stop at node j of date k
    stop: list[BoolArray]
    n_policies: int


def _stop_dates(stop: BoolArray, last: int) -> IntArray:
    """First stopping date per row of a (..., K) boolean array"""
    stop = stop.copy()
    stop[..., last] = True
    return np.asarray(stop.argmax(axis=-1), dtype=np.int64)


@beartype
def brute_force_policies(
    tree: ScenarioTree,
    payoff: Payoff,
    cs: CoordinateSystem | None = None,
    progress: bool = False,
) -> PolicyResult:
    """Best adapted stopping policy by enumerating every stop/continue
    assignment on the non-terminal nodes"""
    K = tree.n_dates
    offsets = np.cumsum([0] + [tree.n_nodes(k) for k in range(K - 1)])
    n_bits = int(offsets[-1])
    if n_bits > MAX_POLICY_BITS:
        raise GuardExceededError(
            f"{n_bits} decision nodes means 2^{n_bits} policies (limit "
            f"2^{MAX_POLICY_BITS})"
        )
    rewards = tree.node_rewards(payoff, cs)
    nodes, prob = tree.enumerate_paths()
    path_rewards = np.stack([rewards[k][nodes[:, k]] for k in range(K)], axis=1)
    columns = nodes[:, : K - 1] + offsets[: K - 1][None, :]

    n_policies = 1 << n_bits
    best_value = -np.inf
    best_index = 0
    chunks = range(0, n_policies, POLICY_CHUNK)
    for start in tqdm(chunks, disable=not progress, desc="policies"):
        index = np.arange(start, min(start + POLICY_CHUNK, n_policies))
        bits = ((index[:, None] >> np.arange(n_bits)[None, :]) & 1).astype(bool)
        stop = np.zeros((index.size, nodes.shape[0], K), dtype=bool)
        if K > 1:
            stop[:, :, : K - 1] = bits[:, columns]
        tau = _stop_dates(stop, K - 1)
        paid = np.take_along_axis(
            np.broadcast_to(path_rewards, stop.shape[:2] + (K,)),
            tau[:, :, None],
            axis=2,
        )[:, :, 0]
        policy_values = paid @ prob
        j = int(policy_values.argmax())
        if policy_values[j] > best_value:
            best_value = float(policy_values[j])
            best_index = int(index[j])

    best_bits = (best_index >> np.arange(n_bits)) & 1
    stop_nodes = [
        best_bits[offsets[k] : offsets[k + 1]].astype(bool) for k in range(K - 1)
    ]
    stop_nodes.append(np.ones(tree.n_nodes(K - 1), dtype=bool))
    logger.info(
        f"[Oracle] brute force over {n_policies} policies: v={best_value:.6f}"
    )
    return PolicyResult(best_value, stop_nodes, n_policies)


@dataclass(frozen=True)
class TreeRules:
    """Relaxed rules given by a stopping intensity per node.

    intensities[k] has shape (n_rules, n_k); the last date is always 1.
    """

    intensities: tuple[FloatArray, ...]

    @property
    def n_rules(self) -> int:
        return int(self.intensities[0].shape[0])

    @classmethod
    def from_stop_nodes(cls, stop: Sequence[BoolArray]) -> "TreeRules":
        return cls(tuple(s.astype(np.float64)[None, :] for s in stop))

    def path_weights(self, nodes: IntArray) -> FloatArray:
        """Weights of every rule along every tree path, (n_rules, P, K)"""
        p = np.stack(
            [self.intensities[k][:, nodes[:, k]] for k in range(nodes.shape[1])],
            axis=2,
        )
        return weights_from_intensities(p, force_terminal=True)

    def rule(self, i: int, nodes: IntArray) -> RelaxedRule:
        return RelaxedRule(self.path_weights(nodes)[i])


@beartype
def random_relaxed_rules(tree: ScenarioTree, n: int, seed: int) -> TreeRules:
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    intensities = []
    for k in range(tree.n_dates):
        if k == tree.n_dates - 1:
            intensities.append(np.ones((n, tree.n_nodes(k))))
        else:
            intensities.append(rng.uniform(0.0, 1.0, (n, tree.n_nodes(k))))
    return TreeRules(tuple(intensities))


def tree_rule_values(
    tree: ScenarioTree,
    rules: TreeRules,
    payoff: Payoff,
    cs: CoordinateSystem | None = None,
) -> FloatArray:
    """Exact value sum_paths prob sum_k P_k phi_k of every rule"""
    rewards = tree.node_rewards(payoff, cs)
    nodes, prob = tree.enumerate_paths()
    path_rewards = np.stack(
        [rewards[k][nodes[:, k]] for k in range(tree.n_dates)], axis=1
    )
    weights = rules.path_weights(nodes)
    return np.asarray((weights * path_rewards[None]).sum(axis=2) @ prob)


def lattice_member(dp: DpResult) -> "LatticeRegion":
    if dp.lattice is None:
        raise ValueError("The DP result carries no lattice to map states onto")
    return LatticeRegion(dp, dp.lattice)


@dataclass(frozen=True)
class LatticeRegion:
    """Exercise set of a lattice DP, looked up at the nearest node.

    Before the last date a node whose value is zero is left out: stopping
    and waiting are tied there and the region keeps waiting.
    """

    dp: DpResult
    lattice: Lattice

    def __call__(self, t: float, x: FloatArray) -> BoolArray:
        k = self.lattice.grid.index_of(t)
        index = tuple(self.lattice.nearest_node(self.lattice.date_step(k), x).T)
        stop = self.dp.exercise[k][index]
        if k < len(self.dp.dates) - 1:
            stop = stop & (self.dp.values[k][index] > EXERCISE_TOL)
        return np.asarray(stop)


@beartype
def optimal_boundary_from_dp(
    dp: DpResult,
    cs: CoordinateSystem,
    xi_grid: XiGrid,
    a_grid: FloatArray,
    eta: int = 1,
    branch: int = 1,
) -> TabularBoundary:
    return extract_boundary(
        lattice_member(dp), cs, xi_grid, a_grid, dp.dates, eta, branch
    )
