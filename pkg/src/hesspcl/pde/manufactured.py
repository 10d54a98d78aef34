"""Manufactured solutions, synthetic observations and observation noise."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .grid import Grid2D

NOISE_DISTRIBUTIONS = ("uniform01", "uniform-symmetric")


@dataclass(frozen=True)
class Observations:
    """Observed node fields.

    ``u``/``f`` hold static state and source values; ``snapshots`` (steps+1 x
    nodes) and ``sources`` (steps+1 x nodes) hold time series; ``dt`` is the
    snapshot spacing.
    """

    u: np.ndarray | None = None
    f: np.ndarray | None = None
    snapshots: np.ndarray | None = None
    sources: np.ndarray | None = None
    dt: float | None = None


# nonlinear Poisson: div(kappa(u) grad u) = f,  u = x(1-x)(1-y)^2 sin(y)

def poisson_kappa(u):
    u = np.asarray(u, dtype=float)
    return 2.0 - (1.4 - 3.0 * u) * np.sin(18.0 * u)


def poisson_dkappa(u):
    u = np.asarray(u, dtype=float)
    return 3.0 * np.sin(18.0 * u) - 18.0 * (1.4 - 3.0 * u) * np.cos(18.0 * u)


def poisson_exact(x, y):
    return x * (1.0 - x) * (1.0 - y) ** 2 * np.sin(y)


def poisson_source(x, y):
    """``div(kappa(u) grad u)`` in closed form: ``kappa(u) lap(u) + kappa'(u) |grad u|^2``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    px, dpx, ddpx = x * (1 - x), 1 - 2 * x, -2.0
    g = (1 - y) ** 2 * np.sin(y)
    dg = -2 * (1 - y) * np.sin(y) + (1 - y) ** 2 * np.cos(y)
    ddg = 2 * np.sin(y) - 4 * (1 - y) * np.cos(y) - (1 - y) ** 2 * np.sin(y)
    u = px * g
    ux, uy = dpx * g, px * dg
    lap = ddpx * g + px * ddg
    return poisson_kappa(u) * lap + poisson_dkappa(u) * (ux**2 + uy**2)


def manufactured_poisson_nonlinear(grid: Grid2D) -> Observations:
    xy = grid.coords
    return Observations(u=poisson_exact(xy[:, 0], xy[:, 1]), f=poisson_source(xy[:, 0], xy[:, 1]))


# heat: u_t = div(kappa(x, y) grad u) + f,  u = x(1-x) y^2 (1-y)^2 exp(-t)

def heat_kappa(x, y):
    return 2 * x**2 - 1.05 * x**4 + x**6 + x * y + y**2


def heat_exact(x, y, t):
    return x * (1 - x) * y**2 * (1 - y) ** 2 * np.exp(-t)


def heat_source(x, y, t):
    """``u_t - div(kappa grad u)`` in closed form."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    X, dX, ddX = x * (1 - x), 1 - 2 * x, -2.0
    Y = y**2 - 2 * y**3 + y**4
    dY = 2 * y - 6 * y**2 + 4 * y**3
    ddY = 2 - 12 * y + 12 * y**2
    e = np.exp(-t)
    k = heat_kappa(x, y)
    kx = 4 * x - 4.2 * x**3 + 6 * x**5 + y
    ky = x + 2 * y
    div = (k * (ddX * Y + X * ddY) + kx * dX * Y + ky * X * dY) * e
    return -X * Y * e - div


def manufactured_heat(grid: Grid2D, dt=0.01, steps=10) -> Observations:
    if dt <= 0 or steps < 1:
        raise ValueError("heat data needs dt > 0 and steps >= 1")
    xy = grid.coords
    t = dt * np.arange(steps + 1)
    snaps = np.stack([heat_exact(xy[:, 0], xy[:, 1], tn) for tn in t])
    srcs = np.stack([heat_source(xy[:, 0], xy[:, 1], tn) for tn in t])
    return Observations(snapshots=snaps, sources=srcs, dt=dt)


def add_noise(obs: Observations, level=0.1, seed=0, distribution="uniform01") -> Observations:
    """Multiplicative noise ``v * (1 + level * z)`` on every observed field.

    ``uniform01`` draws ``z ~ U(0, 1)``; ``uniform-symmetric`` draws ``z ~ U(-1, 1)``.
    """
    if level < 0:
        raise ValueError("noise level must be nonnegative")
    if distribution not in NOISE_DISTRIBUTIONS:
        raise ValueError(f"unknown noise distribution {distribution!r}")
    if level == 0:
        return obs
    rng = np.random.default_rng(seed)
    lo = 0.0 if distribution == "uniform01" else -1.0

    def perturb(v):
        if v is None:
            return None
        return v * (1.0 + level * rng.uniform(lo, 1.0, size=np.shape(v)))

    return replace(
        obs,
        u=perturb(obs.u),
        f=perturb(obs.f),
        snapshots=perturb(obs.snapshots),
        sources=perturb(obs.sources),
    )
