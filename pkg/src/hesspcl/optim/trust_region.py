"""Nearly-exact trust-region method.

The subproblem ``min g^T p + p^T B p / 2  s.t. |p| <= delta`` is solved by the
Moré–Sorensen iteration: Newton steps on ``1/|p(lam)| = 1/delta`` with
``p(lam) = -(B + lam I)^{-1} g`` factored by Cholesky, safeguarded by a
bracket on ``lam``.  When the bracket collapses without meeting the boundary
(the hard case, or close to it) the solve switches to the eigendecomposition
of ``B`` and completes the step with the eigenvector of the smallest
eigenvalue.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from ..linalg import NotPositiveDefinite, SymmetricMatrix, cholesky_shifted, sym_eigen
from .history import CONVERGED, MAX_ITERS, NONFINITE, RADIUS_COLLAPSE, History, IterationRecord


def _dense(b):
    if isinstance(b, SymmetricMatrix):
        return b.to_dense()
    a = np.asarray(b, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("model Hessian must be square")
    return 0.5 * (a + a.T)


class Subproblem:
    """Repeated subproblem solves for one ``(B, g)`` pair and varying radii."""

    boundary_rtol = 1e-10
    gap_rtol = 1e-12
    model_rtol = 1e-11  # relative model accuracy accepted off the boundary
    max_factorizations = 40

    def __init__(self, b, g, lam_hint=0.0):
        self.b = _dense(b)
        self.g = np.asarray(g, dtype=float).copy()
        n = self.g.size
        if self.b.shape != (n, n):
            raise ValueError(f"model Hessian shape {self.b.shape} does not match gradient length {n}")
        self.gnorm = float(np.linalg.norm(self.g))
        d = np.diag(self.b)
        off = np.abs(self.b).sum(axis=1) - np.abs(d)
        self._bnorm = min(np.linalg.norm(self.b, "fro"), float(np.abs(self.b).sum(axis=1).max()))
        self._min_diag = float(d.min()) if n else 0.0
        self._gersh_low = float((d - off).min()) if n else 0.0
        self._newton = None  # (pd, p0) at lam = 0
        self._eig = None
        self.lam = float(lam_hint)  # starting multiplier, e.g. from the previous iterate
        self.factorizations = 0
        self.used_eigen = False

    def model(self, p):
        return float(self.g @ p + 0.5 * p @ (self.b @ p))

    def _newton_step(self):
        if self._newton is None:
            try:
                factor = cholesky_shifted(self.b, 0.0)
                self.factorizations += 1
                self._newton = (True, -cho_solve((factor, True), self.g))
            except NotPositiveDefinite:
                self.factorizations += 1
                self._newton = (False, None)
        return self._newton

    def solve(self, delta):
        if not delta > 0:
            raise ValueError("trust-region radius must be positive")
        n = self.g.size
        if n == 0:
            return np.zeros(0)
        if self.gnorm == 0.0:
            return self._eigen_solve(delta)
        pd, p0 = self._newton_step()
        if pd and np.linalg.norm(p0) <= delta:
            self.lam = 0.0
            return p0

        lo = max(0.0, -self._min_diag, self.gnorm / delta - self._bnorm)
        hi = max(lo, self.gnorm / delta + max(0.0, min(self._bnorm, -self._gersh_low)))
        if pd:
            lo = 0.0  # lam = 0 is admissible but its step leaves the region
        lam = self.lam if lo < self.lam < hi else _safeguard(lo, hi)
        for _ in range(self.max_factorizations):
            try:
                factor = cholesky_shifted(self.b, lam)
            except NotPositiveDefinite:
                self.factorizations += 1
                lo = lam
                # a warm start that just missed is usually closer than the bracket midpoint
                lam = 2.0 * lam if 0.0 < 2.0 * lam < hi else _safeguard(lo, hi)
                if hi - lo <= self.gap_rtol * max(1.0, hi):
                    break
                continue
            self.factorizations += 1
            p = -cho_solve((factor, True), self.g)
            pn = float(np.linalg.norm(p))
            if abs(pn - delta) <= self.boundary_rtol * delta:
                self.lam = lam
                return _clip(p, delta)
            tol = self.model_rtol * (1.0 + abs(self.model(p)))
            if pn < delta:
                # (B + lam I) p = -g with B + lam I psd bounds the gap to the optimum
                if 0.5 * lam * (delta**2 - pn**2) <= tol:
                    self.lam = lam
                    return p
                hi = lam
            elif lam * delta * (pn - delta) <= tol:
                # first-order change of the optimal model value with the radius
                self.lam = lam
                return _clip(p, delta)
            else:
                lo = lam
            w = solve_triangular(factor, p, lower=True, check_finite=False)
            step = (pn / np.linalg.norm(w)) ** 2 * (pn - delta) / delta
            lam_new = lam + step
            lam = lam_new if lo < lam_new < hi else _safeguard(lo, hi)
            if hi - lo <= self.gap_rtol * max(1.0, hi):
                break
        return self._eigen_solve(delta)

    def _eigen_solve(self, delta):
        """Exact solve in the eigenbasis; handles the hard case explicitly."""
        self.used_eigen = True
        if self._eig is None:
            e = sym_eigen(self.b)
            self._eig = (e.eigenvalues, e.eigenvectors, e.eigenvectors.T @ self.g)
        w, v, c = self._eig
        scale = max(1.0, float(np.abs(w).max()))
        lmin = float(w[0])
        low = w <= lmin + 1e-12 * scale  # eigenspace of the smallest eigenvalue
        lam_hat = max(0.0, -lmin)
        c_low = float(np.linalg.norm(c[low]))
        if c_low <= 1e-12 * max(self.gnorm, 1e-300) or self.gnorm == 0.0:
            # g (numerically) orthogonal to the bottom eigenspace
            denom = w[~low] + lam_hat
            coef = np.zeros_like(c)
            coef[~low] = -c[~low] / denom
            p_hat = v @ coef
            pn = float(np.linalg.norm(p_hat))
            if pn <= delta:
                self.lam = lam_hat
                if lmin >= 0.0:
                    return p_hat
                tau = np.sqrt(max(delta**2 - pn**2, 0.0))
                return _clip(p_hat + tau * v[:, np.flatnonzero(low)[0]], delta)
        if lmin > 0.0:
            p0 = -(v @ (c / w))
            if np.linalg.norm(p0) <= delta:
                self.lam = 0.0
                return p0
        lam = _secular_root(w, c, delta, lam_hat, self.gnorm / delta + float(np.abs(w).max()))
        self.lam = lam
        return _clip(-(v @ (c / (w + lam))), delta)


def _safeguard(lo, hi):
    return max(np.sqrt(lo * hi), lo + 0.01 * (hi - lo))


def _clip(p, delta):
    pn = np.linalg.norm(p)
    return p * (delta / pn) if pn > delta else p


def _secular_root(w, c, delta, lo, hi, max_iter=200):
    """Root ``lam > lo`` of ``1/|p(lam)| = 1/delta`` with ``p_i = -c_i/(w_i + lam)``."""
    lam = hi
    for _ in range(max_iter):
        d = w + lam
        if np.any(d <= 0):
            lam = 0.5 * (lo + hi)
            continue
        q = c / d
        pn = float(np.linalg.norm(q))
        if pn > delta:
            lo = lam
        else:
            hi = lam
        if abs(pn - delta) <= 1e-14 * delta or hi - lo <= 1e-15 * max(1.0, hi):
            break
        dp = -float(np.sum(q * q / d)) / pn  # d|p|/d lam
        lam_new = lam - (1.0 / delta - 1.0 / pn) / (dp / pn**2) if dp != 0 else lam
        lam = lam_new if lo < lam_new < hi else 0.5 * (lo + hi)
    return lam


def tr_subproblem(b, g, delta):
    """Global minimizer of ``g^T p + p^T B p / 2`` over ``|p| <= delta``.

    Returns ``(p, predicted_reduction)`` where the reduction is ``-m(p) >= 0``.
    """
    sub = Subproblem(b, g)
    p = sub.solve(float(delta))
    return p, -sub.model(p)


@dataclass
class TrustRegionConfig:
    initial_radius: float = 1.0
    max_radius: float = 100.0
    min_radius: float = 1e-12
    eta: float = 0.1
    shrink_below: float = 0.25
    shrink: float = 0.25
    grow_above: float = 0.75
    grow: float = 2.0
    gtol: float = 1e-10
    max_iters: int = 5000
    timed: bool = False

    def __post_init__(self):
        if not 0 < self.min_radius < self.initial_radius <= self.max_radius:
            raise ValueError("need 0 < min_radius < initial_radius <= max_radius")
        if not 0 <= self.eta < self.shrink_below < self.grow_above < 1:
            raise ValueError("need 0 <= eta < shrink_below < grow_above < 1")
        if self.max_iters < 0:
            raise ValueError("max_iters must be nonnegative")


def _trial_value(oracle, theta):
    try:
        f = oracle.value(theta)
    except (ArithmeticError, ValueError, np.linalg.LinAlgError, RuntimeError):
        return np.inf
    return f if np.isfinite(f) else np.inf


def trust_region_minimize(oracle, theta0, config=None, callback=None, direction_callback=None):
    """Minimize with exact Hessians; returns ``(theta, history)``.

    Every proposed step, accepted or not, is one iteration.  ``callback`` is
    called as ``callback(record, theta, subproblem)`` after each iteration and
    ``direction_callback(k, theta, p, g)`` with each proposed step.
    """
    cfg = config or TrustRegionConfig()
    theta = np.array(theta0, dtype=float)
    hist = History("trust-region", timed=cfg.timed)
    f = oracle.value(theta)
    g = oracle.gradient(theta)
    delta = cfg.initial_radius
    hist.add(IterationRecord(0, f, float(np.linalg.norm(g)), 0.0, delta, True))
    if not np.isfinite(f):
        hist.stop(NONFINITE)
        return theta, hist
    sub = None
    lam = 0.0
    for k in range(1, cfg.max_iters + 1):
        gnorm = float(np.linalg.norm(g))
        if gnorm <= cfg.gtol * (1.0 + abs(f)):
            hist.stop(CONVERGED)
            return theta, hist
        if delta <= cfg.min_radius:
            hist.stop(RADIUS_COLLAPSE)
            return theta, hist
        if sub is None:
            sub = Subproblem(oracle.hessian(theta), g, lam_hint=lam)
        p = sub.solve(delta)
        lam = sub.lam
        if direction_callback is not None:
            direction_callback(k, theta, p, g)
        pred = -sub.model(p)
        pn = float(np.linalg.norm(p))
        f_new = _trial_value(oracle, theta + p)
        rho = (f - f_new) / pred if pred > 0 and np.isfinite(f_new) else -np.inf
        used = delta
        if rho < cfg.shrink_below:
            # shrinking past |p| keeps a rejected interior step from being proposed again
            delta = cfg.shrink * min(delta, pn)
        elif rho > cfg.grow_above and pn >= 0.99 * delta:
            delta = min(cfg.grow * delta, cfg.max_radius)
        accepted = rho > cfg.eta
        if accepted:
            theta = theta + p
            f = f_new
            g = oracle.gradient(theta)
            sub = None
        rec = hist.add(IterationRecord(k, f if accepted else f_new, float(np.linalg.norm(g)), pn, used, accepted))
        if callback is not None:
            callback(rec, theta, sub)
    gnorm = float(np.linalg.norm(g))
    hist.stop(CONVERGED if gnorm <= cfg.gtol * (1.0 + abs(f)) else MAX_ITERS)
    return theta, hist
