"""Fully connected tanh networks: parameter layout, initialization and tape registration.

Parameters are flattened layer by layer as ``W_1, b_1, W_2, b_2, ...`` with
each ``W`` stored row-major with shape ``(fan_out, fan_in)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .primitives import Affine, tanh

PARAMS_MAGIC = "hesspcl-params v1"


@dataclass(frozen=True)
class NetworkSpec:
    input_dim: int
    output_dim: int = 1
    hidden: tuple = (20, 20, 20)
    activation: str = "tanh"

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.input_dim < 1 or self.output_dim < 1 or any(h < 1 for h in self.hidden):
            raise ValueError(f"invalid network sizes: {self}")
        if self.activation != "tanh":
            raise ValueError(f"unsupported activation {self.activation!r}")

    @property
    def sizes(self):
        return (self.input_dim, *self.hidden, self.output_dim)

    @property
    def layers(self):
        s = self.sizes
        return list(zip(s[:-1], s[1:]))

    @property
    def n_params(self):
        return sum((fan_in + 1) * fan_out for fan_in, fan_out in self.layers)

    def layer_slices(self):
        """``(weight_slice, bias_slice)`` into the flat parameter vector, per layer."""
        out, start = [], 0
        for fan_in, fan_out in self.layers:
            w = slice(start, start + fan_in * fan_out)
            b = slice(w.stop, w.stop + fan_out)
            out.append((w, b))
            start = b.stop
        return out


def init_params(spec: NetworkSpec, seed) -> np.ndarray:
    """Glorot-uniform weights, zero biases; deterministic for a fixed seed."""
    rng = np.random.default_rng(seed)
    theta = np.zeros(spec.n_params)
    for (fan_in, fan_out), (ws, _) in zip(spec.layers, spec.layer_slices()):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        theta[ws] = rng.uniform(-limit, limit, size=fan_in * fan_out)
    return theta


def unpack(spec: NetworkSpec, theta):
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (spec.n_params,):
        raise ValueError(f"expected {spec.n_params} parameters, got shape {theta.shape}")
    return [
        (theta[ws].reshape(fan_out, fan_in), theta[bs])
        for (fan_in, fan_out), (ws, bs) in zip(spec.layers, spec.layer_slices())
    ]


def network_forward(spec: NetworkSpec, theta, inputs, return_activations=False):
    """Plain numpy evaluation; ``inputs`` has shape ``(points, input_dim)``."""
    h = np.asarray(inputs, dtype=float).reshape(-1, spec.input_dim)
    layers = unpack(spec, theta)
    activations = []
    for k, (w, b) in enumerate(layers):
        h = h @ w.T + b
        if k < len(layers) - 1:
            h = np.tanh(h)
            activations.append(h)
    return (h, activations) if return_activations else h


def register_network(builder, spec: NetworkSpec, param_indices, inputs):
    """Append the network's stages to ``builder``.

    ``param_indices`` are the live indices holding the flat parameters and
    ``inputs`` the fixed evaluation points, shape ``(points, input_dim)``.
    Returns the live indices of the outputs, shape ``(points * output_dim,)``
    ordered point-major.
    """
    param_indices = np.asarray(param_indices, dtype=np.int64)
    if param_indices.shape != (spec.n_params,):
        raise ValueError(f"network needs {spec.n_params} parameter indices, got {param_indices.size}")
    x = np.asarray(inputs, dtype=float)
    if x.ndim == 1:
        x = x.reshape(-1, spec.input_dim)
    if x.ndim != 2 or x.shape[1] != spec.input_dim:
        raise ValueError(f"inputs must have shape (points, {spec.input_dim}), got {x.shape}")
    points = x.shape[0]
    h = builder.constant(x)
    n_layers = len(spec.layers)
    for k, ((fan_in, fan_out), (ws, bs)) in enumerate(zip(spec.layers, spec.layer_slices())):
        stage_in = np.concatenate([param_indices[ws], param_indices[bs], h])
        h = builder.add(Affine(fan_in, fan_out, points), stage_in)
        if k < n_layers - 1:
            h = builder.add(tanh(h.size), h)
    return h


def save_params(path, theta, seed=0, header_lines=()):
    theta = np.asarray(theta, dtype=float)
    lines = [f"# {h}" for h in header_lines]
    lines.append(f"{PARAMS_MAGIC} {theta.size} {seed}")
    lines.extend(repr(float(t)) for t in theta)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_params(path):
    """Return ``(theta, seed)`` from a file written by :func:`save_params`."""
    with open(path) as fh:
        lines = [ln for ln in fh.read().splitlines() if ln and not ln.startswith("#")]
    head = lines[0].split()
    if " ".join(head[:2]) != PARAMS_MAGIC or len(head) != 4:
        raise ValueError(f"{path}: not a {PARAMS_MAGIC} file")
    n, seed = int(head[2]), int(head[3])
    theta = np.array([float(t) for t in lines[1:]])
    if theta.size != n:
        raise ValueError(f"{path}: header declares {n} values, found {theta.size}")
    return theta, seed
