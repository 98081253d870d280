"""Neural boundary g^theta(t, xi) with hand-written reverse-mode gradients.

Inputs are (t / horizon, xi). Hidden layers use tanh; the output is
output_scale * softplus(z), so g^theta > 0 for every theta. All weights and
biases live in one flat vector theta, layer by layer, W (n_in x n_out)
first, then b (n_out).
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import numpy.typing as npt
from beartype import beartype
from scipy.special import expit

from market_env.utils import FloatArray, Real
from stopping_agent.boundary import Boundary

logger = logging.getLogger("logger")

HIDDEN_ACTIVATION = "tanh"
OUTPUT_ACTIVATION = "softplus"


class NonFiniteError(FloatingPointError):
    def __init__(
        self, message: str, path: int | None = None, date: int | None = None
    ) -> None:
        locus = []
        if path is not None:
            locus.append(f"path={path}")
        if date is not None:
            locus.append(f"date={date}")
        if locus:
            message = f"{message} ({', '.join(locus)})"
        super().__init__(message)
        self.path = path
        self.date = date


def softplus(z: FloatArray) -> FloatArray:
    return np.logaddexp(0.0, z)


def inverse_softplus(y: float) -> float:
    if not y > 0:
        raise ValueError(f"softplus only reaches positive values, got {y}")
    # log(expm1(y)) loses precision for large y
    return float(y + np.log(-np.expm1(-y)))


def n_params_for(layer_sizes: Sequence[int]) -> int:
    return sum(
        n_in * n_out + n_out
        for n_in, n_out in zip(layer_sizes[:-1], layer_sizes[1:])
    )


@dataclass
class AdTape:
    """Primal values of one batch evaluation, kept for the backward sweep.

    activations[0] is the encoded input, activations[l] the output of layer
    l; pre_activations[l - 1] is the affine part feeding it.
    """

    activations: list[FloatArray] = field(default_factory=list)
    pre_activations: list[FloatArray] = field(default_factory=list)
    output: FloatArray = field(default_factory=lambda: np.zeros(0))


@dataclass(frozen=True)
class MlpBoundary(Boundary):
    layer_sizes: tuple[int, ...]
    params: FloatArray
    horizon: float = 1.0
    output_scale: float = 1.0

    def __post_init__(self) -> None:
        if len(self.layer_sizes) < 2 or self.layer_sizes[-1] != 1:
            raise ValueError(
                f"layer_sizes must have >= 2 entries and end in 1, got "
                f"{self.layer_sizes}"
            )
        if self.layer_sizes[0] < 2:
            raise ValueError("The input layer takes t and at least one xi")
        if self.params.shape != (n_params_for(self.layer_sizes),):
            raise ValueError(
                f"theta has shape {self.params.shape}, expected "
                f"({n_params_for(self.layer_sizes)},)"
            )
        if not self.horizon > 0:
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        if not self.output_scale > 0:
            raise ValueError("output_scale must be positive")

    @property
    def theta(self) -> FloatArray:
        return self.params

    @property
    def xi_dim(self) -> int:
        return self.layer_sizes[0] - 1

    @property
    def n_params(self) -> int:
        return int(self.params.size)

    @property
    def activations(self) -> tuple[str, ...]:
        n_hidden = len(self.layer_sizes) - 2
        return (HIDDEN_ACTIVATION,) * n_hidden + (OUTPUT_ACTIVATION,)

    def with_theta(self, theta: npt.ArrayLike) -> "MlpBoundary":
        return MlpBoundary(
            self.layer_sizes,
            np.asarray(theta, dtype=np.float64).copy(),
            self.horizon,
            self.output_scale,
        )

    def layers(
        self, theta: FloatArray | None = None
    ) -> list[tuple[FloatArray, FloatArray]]:
        """(W, b) views into theta"""
        flat = self.params if theta is None else theta
        out = []
        pos = 0
        for n_in, n_out in zip(self.layer_sizes[:-1], self.layer_sizes[1:]):
            w = flat[pos : pos + n_in * n_out].reshape(n_in, n_out)
            pos += n_in * n_out
            b = flat[pos : pos + n_out]
            pos += n_out
            out.append((w, b))
        return out

    def encode(self, t: FloatArray, xi: FloatArray) -> FloatArray:
        if xi.shape[1] != self.xi_dim:
            raise ValueError(
                f"Expected latent points of dimension {self.xi_dim}, got "
                f"{xi.shape[1]}"
            )
        return np.concatenate([(t / self.horizon)[:, None], xi], axis=1)

    def forward(self, t: FloatArray, xi: FloatArray) -> AdTape:
        tape = AdTape()
        h = self.encode(t, xi)
        tape.activations.append(h)
        layers = self.layers()
        for i, (w, b) in enumerate(layers):
            z = h @ w + b
            tape.pre_activations.append(z)
            if i < len(layers) - 1:
                h = np.tanh(z)
            else:
                h = self.output_scale * softplus(z)
            tape.activations.append(h)
        tape.output = h[:, 0]
        return tape

    def evaluate(self, t: FloatArray, xi: FloatArray) -> FloatArray:
        return self.forward(t, xi).output

    def backward(self, tape: AdTape, adjoint: FloatArray) -> FloatArray:
        """Gradient of sum_k adjoint[k] * g(t_k, xi_k) with respect to theta"""
        if adjoint.shape != tape.output.shape:
            raise ValueError(
                f"adjoint has shape {adjoint.shape}, outputs have shape "
                f"{tape.output.shape}"
            )
        grads: list[FloatArray] = []
        layers = self.layers()
        z_out = tape.pre_activations[-1]
        delta = (adjoint * self.output_scale)[:, None] * expit(z_out)
        for i in range(len(layers) - 1, -1, -1):
            w, _ = layers[i]
            h_in = tape.activations[i]
            grads.append(delta.sum(axis=0))
            grads.append((h_in.T @ delta).ravel())
            if i > 0:
                delta = (delta @ w.T) * (1.0 - tape.activations[i] ** 2)
        return np.concatenate(grads[::-1])


@beartype
def mlp_value_and_grad(
    b: MlpBoundary,
    t: npt.ArrayLike,
    xi: npt.ArrayLike,
    adjoint: npt.ArrayLike,
) -> tuple[FloatArray, FloatArray]:
    pts = np.atleast_2d(np.asarray(xi, dtype=np.float64))
    times = np.broadcast_to(
        np.asarray(t, dtype=np.float64), (pts.shape[0],)
    )
    adj = np.asarray(adjoint, dtype=np.float64)
    if adj.shape != (pts.shape[0],):
        raise ValueError(
            f"Got {adj.shape[0] if adj.ndim else 1} adjoints for "
            f"{pts.shape[0]} inputs"
        )
    bad = np.flatnonzero(~np.isfinite(adj))
    if bad.size:
        raise NonFiniteError(
            f"Non-finite adjoint {adj[bad[0]]}", path=int(bad[0])
        )
    tape = b.forward(times, pts)
    bad = np.flatnonzero(~np.isfinite(tape.output))
    if bad.size:
        raise NonFiniteError("Non-finite network output", path=int(bad[0]))
    return tape.output, b.backward(tape, adj)


@beartype
def init_mlp(
    xi_dim: int,
    hidden: Sequence[int] = (64, 64),
    horizon: Real = 1.0,
    seed: int = 0,
    output_scale: Real = 1.0,
    init_level: Real | None = None,
) -> MlpBoundary:
    """Random tanh network with weights drawn N(0, 1 / n_in).

    init_level sets the output bias so that a network with zero input
    weights into the last layer would return exactly init_level.
    """
    sizes = (xi_dim + 1,) + tuple(hidden) + (1,)
    rng = np.random.default_rng(seed)
    chunks = []
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        chunks.append(rng.normal(0.0, 1.0 / np.sqrt(n_in), n_in * n_out))
        chunks.append(np.zeros(n_out))
    if init_level is not None:
        chunks[-1][:] = inverse_softplus(float(init_level) / output_scale)
    return MlpBoundary(
        sizes,
        np.concatenate(chunks),
        horizon=float(horizon),
        output_scale=float(output_scale),
    )


def save_mlp(b: MlpBoundary, path: Path | str) -> None:
    header = json.dumps(
        {
            "layer_sizes": list(b.layer_sizes),
            "activations": list(b.activations),
            "horizon": b.horizon,
            "output_scale": b.output_scale,
        }
    )
    np.savetxt(path, b.params, fmt="%.17g", header=header)


def load_mlp(path: Path | str) -> MlpBoundary:
    with open(path, "r") as f:
        first = f.readline()
    if not first.startswith("#"):
        raise ValueError(f"{path} has no network header")
    header = json.loads(first.lstrip("#").strip())
    activations = tuple(header.get("activations", ()))
    n_hidden = len(header["layer_sizes"]) - 2
    if activations != (HIDDEN_ACTIVATION,) * n_hidden + (OUTPUT_ACTIVATION,):
        raise ValueError(f"Unsupported activations {activations} in {path}")
    theta = np.atleast_1d(np.loadtxt(path, dtype=np.float64))
    return MlpBoundary(
        tuple(int(n) for n in header["layer_sizes"]),
        theta,
        horizon=float(header["horizon"]),
        output_scale=float(header["output_scale"]),
    )
