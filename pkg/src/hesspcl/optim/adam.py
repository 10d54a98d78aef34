"""Full-batch ADAM."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .history import CONVERGED, MAX_ITERS, NONFINITE, History, IterationRecord


@dataclass
class AdamConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    gtol: float = 1e-10
    max_iters: int = 5000
    timed: bool = False

    def __post_init__(self):
        if self.lr <= 0 or not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1) or self.eps <= 0:
            raise ValueError("ADAM needs lr > 0, betas in [0, 1) and eps > 0")


def adam_minimize(oracle, theta0, config=None, direction_callback=None):
    """Returns ``(theta, history)``; ``direction_callback(k, theta, step, g)`` sees each step."""
    cfg = config or AdamConfig()
    theta = np.array(theta0, dtype=float)
    hist = History("adam", timed=cfg.timed)
    f, g = oracle.value(theta), oracle.gradient(theta)
    hist.add(IterationRecord(0, f, float(np.linalg.norm(g)), 0.0, cfg.lr, True))
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    for k in range(1, cfg.max_iters + 1):
        if not np.isfinite(f):
            hist.stop(NONFINITE)
            return theta, hist
        if np.linalg.norm(g) <= cfg.gtol * (1.0 + abs(f)):
            hist.stop(CONVERGED)
            return theta, hist
        m = cfg.beta1 * m + (1 - cfg.beta1) * g
        v = cfg.beta2 * v + (1 - cfg.beta2) * g * g
        m_hat = m / (1 - cfg.beta1**k)
        v_hat = v / (1 - cfg.beta2**k)
        step = -cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.eps)
        if direction_callback is not None:
            direction_callback(k, theta, step, g)
        theta = theta + step
        f, g = oracle.value(theta), oracle.gradient(theta)
        hist.add(IterationRecord(k, f, float(np.linalg.norm(g)), float(np.linalg.norm(step)), cfg.lr, True))
    hist.stop(NONFINITE if not np.isfinite(f) else MAX_ITERS)
    return theta, hist
