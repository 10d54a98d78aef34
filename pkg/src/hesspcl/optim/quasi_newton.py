"""BFGS and L-BFGS baselines with a strong-Wolfe line search."""
from __future__ import annotations

import warnings
from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy.optimize import line_search

from .history import CONVERGED, LINE_SEARCH_FAILED, MAX_ITERS, NONFINITE, History, IterationRecord


@dataclass
class LineSearchConfig:
    c1: float = 1e-4
    c2: float = 0.9
    gtol: float = 1e-10
    max_iters: int = 5000
    memory: int = 10  # L-BFGS pairs
    curvature_tol: float = 1e-10
    max_evals: int = 50  # per line search
    timed: bool = False

    def __post_init__(self):
        if not 0 < self.c1 < self.c2 < 1:
            raise ValueError("strong Wolfe constants need 0 < c1 < c2 < 1")
        if self.memory < 1:
            raise ValueError("L-BFGS memory must be at least 1")
        if self.max_iters < 0:
            raise ValueError("max_iters must be nonnegative")


def _wolfe(oracle, theta, p, f, g, f_prev, cfg):
    def fun(x):
        v = oracle.value(x)
        return v if np.isfinite(v) else np.inf

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)  # includes scipy's LineSearchWarning
        alpha, _, _, f_new, _, _ = line_search(
            fun, oracle.gradient, theta, p, gfk=g, old_fval=f, old_old_fval=f_prev,
            c1=cfg.c1, c2=cfg.c2, maxiter=cfg.max_evals,
        )
    if alpha is None or f_new is None or not np.isfinite(f_new):
        return None, None
    return float(alpha), float(f_new)


def _curvature_ok(s, y, cfg):
    return s @ y > cfg.curvature_tol * np.linalg.norm(s) * np.linalg.norm(y)


def _quasi_newton(oracle, theta0, cfg, method, direction, update, reset, direction_callback):
    theta = np.array(theta0, dtype=float)
    hist = History(method, timed=cfg.timed)
    f = oracle.value(theta)
    g = oracle.gradient(theta)
    hist.add(IterationRecord(0, f, float(np.linalg.norm(g)), 0.0, 0.0, True))
    if not np.isfinite(f):
        hist.stop(NONFINITE)
        return theta, hist
    f_prev = f + np.linalg.norm(g) / 2.0
    for k in range(1, cfg.max_iters + 1):
        if np.linalg.norm(g) <= cfg.gtol * (1.0 + abs(f)):
            hist.stop(CONVERGED)
            return theta, hist
        p = direction(g)
        if not g @ p < 0:
            reset()
            p = -g
        if direction_callback is not None:
            direction_callback(k, theta, p, g)
        alpha, f_new = _wolfe(oracle, theta, p, f, g, f_prev, cfg)
        if alpha is None:
            hist.stop(LINE_SEARCH_FAILED)
            return theta, hist
        s = alpha * p
        theta = theta + s
        g_new = oracle.gradient(theta)
        if not update(s, g_new - g):
            hist.skipped_updates.append(k)
        f_prev, f, g = f, f_new, g_new
        hist.add(IterationRecord(k, f, float(np.linalg.norm(g)), float(np.linalg.norm(s)), alpha, True))
    hist.stop(CONVERGED if np.linalg.norm(g) <= cfg.gtol * (1.0 + abs(f)) else MAX_ITERS)
    return theta, hist


def bfgs_minimize(oracle, theta0, config=None, direction_callback=None):
    """Dense inverse-Hessian BFGS; returns ``(theta, history)``.

    ``direction_callback(k, theta, p, g)`` sees every search direction before
    its line search.  Updates failing the curvature guard are skipped and
    listed in ``history.skipped_updates``.
    """
    cfg = config or LineSearchConfig()
    n = np.size(theta0)
    state = {"h": np.eye(n), "fresh": True}

    def direction(g):
        return -(state["h"] @ g)

    def update(s, y):
        if not _curvature_ok(s, y, cfg):
            return False
        sy = s @ y
        h = state["h"]
        if state["fresh"]:
            h *= sy / (y @ y)  # scale the identity before the first update
            state["fresh"] = False
        rho = 1.0 / sy
        hy = h @ y
        h -= rho * (np.outer(hy, s) + np.outer(s, hy))
        h += (rho * rho * (y @ hy) + rho) * np.outer(s, s)
        return True

    def reset():
        state["h"] = np.eye(n)
        state["fresh"] = True

    return _quasi_newton(oracle, theta0, cfg, "bfgs", direction, update, reset, direction_callback)


def lbfgs_minimize(oracle, theta0, config=None, direction_callback=None):
    """Limited-memory BFGS (two-loop recursion); returns ``(theta, history)``."""
    cfg = config or LineSearchConfig()
    pairs = deque(maxlen=cfg.memory)

    def direction(g):
        q = g.copy()
        alphas = []
        for s, y, rho in reversed(pairs):
            a = rho * (s @ q)
            q -= a * y
            alphas.append(a)
        if pairs:
            s, y, _ = pairs[-1]
            q *= (s @ y) / (y @ y)
        for (s, y, rho), a in zip(pairs, reversed(alphas)):
            b = rho * (y @ q)
            q += (a - b) * s
        return -q

    def update(s, y):
        if not _curvature_ok(s, y, cfg):
            return False
        pairs.append((s, y, 1.0 / (s @ y)))
        return True

    return _quasi_newton(oracle, theta0, cfg, "lbfgs", direction, update, pairs.clear, direction_callback)
