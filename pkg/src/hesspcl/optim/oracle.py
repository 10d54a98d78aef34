"""Objective oracles shared by every optimizer."""
from __future__ import annotations

import numpy as np

from ..linalg import SymmetricMatrix
from ..tape import Tape, forward, gradient, hessian


class Oracle:
    """Interface: ``value``, ``gradient`` and (for trust region) ``hessian`` of ``theta``."""

    dim = None

    def value(self, theta) -> float:
        raise NotImplementedError

    def gradient(self, theta) -> np.ndarray:
        raise NotImplementedError

    def hessian(self, theta) -> SymmetricMatrix:
        raise NotImplementedError(f"{type(self).__name__} has no Hessian")

    def value_and_gradient(self, theta):
        return self.value(theta), self.gradient(theta)


class FunctionOracle(Oracle):
    """Wraps plain callables; ``hess`` may return a dense array."""

    def __init__(self, f, grad, hess=None, dim=None):
        self._f, self._g, self._h = f, grad, hess
        self.dim = dim

    def value(self, theta):
        return float(self._f(np.asarray(theta, dtype=float)))

    def gradient(self, theta):
        return np.asarray(self._g(np.asarray(theta, dtype=float)), dtype=float)

    def hessian(self, theta):
        if self._h is None:
            return super().hessian(theta)
        h = self._h(np.asarray(theta, dtype=float))
        return h if isinstance(h, SymmetricMatrix) else SymmetricMatrix.from_dense(np.asarray(h, dtype=float))


class TapeOracle(Oracle):
    """Evaluates a tape, reusing the forward trace of the most recent ``theta``."""

    def __init__(self, tape: Tape):
        self.tape = tape
        self.dim = tape.n_inputs
        self._key = None
        self._val = self._trace = self._grad = None
        self.evaluations = 0
        self.hessians = 0

    def _forward(self, theta):
        theta = np.asarray(theta, dtype=float)
        key = theta.tobytes()
        if key != self._key:
            self._val, self._trace = forward(self.tape, theta)
            self._grad = None
            self._key = key
            self.evaluations += 1
        return theta

    def value(self, theta):
        self._forward(theta)
        return float(self._val)

    def gradient(self, theta):
        theta = self._forward(theta)
        if self._grad is None:
            self._grad = gradient(self.tape, theta, trace=self._trace)
        return self._grad.copy()

    def hessian(self, theta):
        theta = self._forward(theta)
        self.hessians += 1
        return hessian(self.tape, theta, trace=self._trace)
