"""Hessian-spectrum and optimizer diagnostics."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .linalg import EigenDecomposition, sym_eigen
from .nn import NetworkSpec, network_forward

DEFAULT_EPS = 1e-6
CONDITION_CUTOFF = 1e12


@dataclass(frozen=True)
class SpectrumReport:
    eigenvalues: np.ndarray  # ascending
    positive: int
    zero: int
    negative: int
    threshold: float
    eps: float
    reference: str  # "lambda_max", or "abs_max" when lambda_max <= 0

    @property
    def dim(self):
        return self.eigenvalues.size

    @property
    def counts(self):
        return self.positive, self.zero, self.negative

    @property
    def effective_dofs(self):
        return self.positive

    def to_dict(self):
        return {
            "dim": self.dim,
            "positive": self.positive,
            "zero": self.zero,
            "negative": self.negative,
            "threshold": self.threshold,
            "eps": self.eps,
            "reference": self.reference,
            "zero_ratio": zero_ratio(self),
            "lambda_min": float(self.eigenvalues[0]),
            "lambda_max": float(self.eigenvalues[-1]),
        }


def classify_eigenvalues(eigenvalues, eps=DEFAULT_EPS) -> SpectrumReport:
    """Positive above ``eps*lambda_max``, negative below ``-eps*lambda_max``, zero otherwise.

    If no eigenvalue is positive the scale falls back to ``eps*max|lambda|``.
    """
    w = np.sort(np.asarray(eigenvalues, dtype=float).ravel())
    if w.size < 1:
        raise ValueError("spectrum needs at least one eigenvalue")
    if not eps >= 0:
        raise ValueError("eps must be nonnegative")
    lmax = float(w[-1])
    if lmax > 0:
        ref, thr = "lambda_max", eps * lmax
    else:
        ref, thr = "abs_max", eps * float(np.abs(w).max())
    pos = int(np.sum(w > thr))
    neg = int(np.sum(w < -thr))
    return SpectrumReport(w, pos, w.size - pos - neg, neg, thr, eps, ref)


def classify_spectrum(h, eps=DEFAULT_EPS) -> SpectrumReport:
    """Classify the spectrum of a symmetric matrix (or of a ready decomposition)."""
    if isinstance(h, EigenDecomposition):
        return classify_eigenvalues(h.eigenvalues, eps)
    return classify_eigenvalues(sym_eigen(h).eigenvalues, eps)


def zero_ratio(report: SpectrumReport) -> float:
    return 100.0 * report.zero / report.dim


def perturbed_loss_profile(loss, theta, direction, alphas):
    """``L(theta + alpha v)`` on a grid of ``alpha``; ``loss`` is a callable or an oracle."""
    v = np.asarray(direction, dtype=float)
    if abs(np.linalg.norm(v) - 1.0) > 1e-8:
        raise ValueError("perturbation direction must have unit norm")
    f = loss.value if hasattr(loss, "value") else loss
    theta = np.asarray(theta, dtype=float)
    return np.array([f(theta + a * v) for a in np.asarray(alphas, dtype=float)])


@dataclass(frozen=True)
class AngleDiagnostics:
    cos_gradient: float  # cos(theta_1) = -p.g / (|p||g|)
    cos_newton: float | None  # cos(theta_2) = p.q / (|p||q|), q = -H^{-1} g
    reason: str = ""  # why cos_newton is missing


def angle_diagnostics(p, g, h, cond_max=CONDITION_CUTOFF, eig: EigenDecomposition | None = None):
    p = np.asarray(p, dtype=float)
    g = np.asarray(g, dtype=float)
    pn, gn = np.linalg.norm(p), np.linalg.norm(g)
    if pn == 0 or gn == 0:
        raise ValueError("angle diagnostics need nonzero direction and gradient")
    cos1 = float(-(p @ g) / (pn * gn))
    e = eig if eig is not None else sym_eigen(h)
    mags = np.abs(e.eigenvalues)
    if mags.min() == 0.0 or mags.max() / mags.min() > cond_max:
        cond = np.inf if mags.min() == 0.0 else mags.max() / mags.min()
        return AngleDiagnostics(cos1, None, f"Hessian condition number {cond:.3g} exceeds {cond_max:.0e}")
    q = -(e.eigenvectors @ ((e.eigenvectors.T @ g) / e.eigenvalues))
    return AngleDiagnostics(cos1, float(p @ q / (pn * np.linalg.norm(q))))


def weight_magnitude_cdf(theta):
    """Sorted ``|theta_i|`` and the fraction of weights at or below each value."""
    mags = np.sort(np.abs(np.asarray(theta, dtype=float).ravel()))
    return mags, np.arange(1, mags.size + 1) / mags.size


@dataclass(frozen=True)
class ActivationHistogram:
    counts: np.ndarray
    edges: np.ndarray
    saturation: float  # share of activations with |a| > 0.99


def saturation_fraction(activations, level=0.99):
    a = np.abs(np.concatenate([np.ravel(x) for x in activations] or [np.zeros(0)]))
    return float(np.mean(a > level)) if a.size else 0.0


def activation_histogram(spec: NetworkSpec, theta, probe=(0.5, 0.5), bins=40):
    """Histogram of every hidden tanh output for one forward pass at ``probe``."""
    probe = np.asarray(probe, dtype=float).ravel()
    if probe.size != spec.input_dim:
        raise ValueError(f"probe has {probe.size} coordinates but the network takes {spec.input_dim}")
    _, acts = network_forward(spec, theta, probe[None, :], return_activations=True)
    values = np.concatenate([a.ravel() for a in acts]) if acts else np.zeros(0)
    counts, edges = np.histogram(values, bins=bins, range=(-1.0, 1.0))
    return ActivationHistogram(counts, edges, saturation_fraction(acts))


def _csv_text(header_lines, columns, rows):
    buf = io.StringIO()
    for line in header_lines:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    w.writerows(rows)
    return buf.getvalue()


def spectrum_csv(report: SpectrumReport, header_lines=()):
    return _csv_text(header_lines, ("index", "eigenvalue"), ((i, repr(float(x))) for i, x in enumerate(report.eigenvalues)))


def cdf_csv(theta, header_lines=()):
    mags, frac = weight_magnitude_cdf(theta)
    return _csv_text(header_lines, ("magnitude", "fraction"), ((repr(float(m)), repr(float(f))) for m, f in zip(mags, frac)))


def histogram_csv(hist: ActivationHistogram, header_lines=()):
    rows = ((repr(float(lo)), repr(float(hi)), int(c)) for lo, hi, c in zip(hist.edges[:-1], hist.edges[1:], hist.counts))
    return _csv_text(header_lines, ("bin_low", "bin_high", "count"), rows)


def profile_csv(alphas, curves, header_lines=()):
    """``curves`` maps a column name to loss values on ``alphas``."""
    names = list(curves)
    rows = ([repr(float(a))] + [repr(float(curves[n][i])) for n in names] for i, a in enumerate(alphas))
    return _csv_text(header_lines, ["alpha", *names], rows)
