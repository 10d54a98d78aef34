"""Finite-difference and brute-force oracle suites.

Each suite returns a :class:`SuiteResult`; ``run_all`` drives the ``verify``
subcommand.  The same suites back the acceptance tests.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize as scipy_minimize

from .linalg import SparseMatrix
from .nn import NetworkSpec, init_params
from .optim.trust_region import Subproblem
from .pde import (
    Grid2D,
    TriMesh,
    add_noise,
    build_fem_poisson_loss,
    build_heat_loss,
    build_poisson_fd_loss,
    fem_observations,
    manufactured_heat,
    manufactured_poisson_nonlinear,
    poisson_dkappa,
    poisson_exact,
    poisson_kappa,
    poisson_source,
    solve_nonlinear_poisson,
)
from .primitives import Affine, Gather, Linear, ScatterAdd, SumOfSquares, elementwise, weighted_hessian_dense
from .sparse_solver import SolvePattern, SparseSolve, solve_forward, solve_jacobian_dense, solve_weighted_hessian
from .tape import gradient, hessian, forward

GRAD_RTOL = 1e-6
HESS_RTOL = 1e-5


@dataclass
class SuiteResult:
    name: str
    checks: int = 0
    failures: list = field(default_factory=list)
    worst: dict = field(default_factory=dict)  # measure -> largest observed error
    seconds: float = 0.0

    @property
    def passed(self):
        return self.checks > 0 and not self.failures

    def check(self, measure, error, tol, label):
        self.checks += 1
        self.worst[measure] = max(self.worst.get(measure, 0.0), float(error))
        if not error <= tol:
            self.failures.append(f"{label}: {measure} error {error:.3g} > {tol:.0e}")

    def summary(self):
        worst = ", ".join(f"{k} {v:.2e}" for k, v in sorted(self.worst.items()))
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: {self.checks} checks in {self.seconds:.1f}s (worst {worst})"


def rel_err(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    scale = max(np.linalg.norm(b), np.linalg.norm(a), 1e-300)
    return float(np.linalg.norm(a - b) / scale)


def fd_jacobian(f, x, h=1e-6):
    """Central differences, one column per coordinate."""
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(x.size):
        step = h * max(1.0, abs(x[i]))
        e = np.zeros_like(x)
        e[i] = step
        cols.append((np.asarray(f(x + e)) - np.asarray(f(x - e))) / (2 * step))
    return np.column_stack(cols) if cols else np.zeros((np.size(f(x)), 0))


def fd_gradient(f, x, h=1e-5):
    return fd_jacobian(lambda v: np.atleast_1d(f(v)), x, h)[0]


def fd_hessian(grad, x, h=1e-5):
    """Finite differences of an exact gradient, symmetrized."""
    j = fd_jacobian(grad, x, h)
    return 0.5 * (j + j.T)


# --- tapes -------------------------------------------------------------------

def small_tapes(rng):
    """The three benchmark tapes at small random configurations, with a parameter vector each."""
    noise_seed = int(rng.integers(1 << 30))
    grid = Grid2D(4)
    fd_spec = NetworkSpec(1, 1, (3,))
    fd_obs = add_noise(manufactured_poisson_nonlinear(grid), 0.1, noise_seed)
    spatial = NetworkSpec(2, 1, (3,))
    heat_obs = manufactured_heat(grid, dt=0.05, steps=2)
    mesh = TriMesh.structured(2)
    out = []
    for name, tape, spec in (
        ("poisson-fd", build_poisson_fd_loss(grid, fd_obs, fd_spec), fd_spec),
        ("heat", build_heat_loss(grid, heat_obs, spatial), spatial),
        ("poisson-fem", build_fem_poisson_loss(mesh, fem_observations(mesh), spatial), spatial),
    ):
        theta = init_params(spec, int(rng.integers(1 << 30)))
        theta += 0.3 * rng.standard_normal(theta.size)
        if name == "poisson-fem":
            theta[-1] += 2.0  # keep the coefficient positive so the stiffness matrix is nonsingular
        out.append((name, tape, theta))
    return out


def tape_suite(configs=5, seed=0) -> SuiteResult:
    res = SuiteResult("tape")
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    for c in range(configs):
        for name, tape, theta in small_tapes(rng):
            label = f"{name}#{c}"
            g = gradient(tape, theta)
            res.check("gradient", rel_err(g, fd_gradient(lambda v: forward(tape, v)[0], theta)), GRAD_RTOL, label)
            h = hessian(tape, theta).to_dense()
            res.check("hessian", rel_err(h, fd_hessian(lambda v: gradient(tape, v), theta)), HESS_RTOL, label)
            hu = hessian(tape, theta, condensed=False).to_dense()
            res.check("condensed", float(np.max(np.abs(h - hu))), 0.0, label)
    res.seconds = time.perf_counter() - t0
    return res


# --- primitives --------------------------------------------------------------

def _random_sparse(rng, rows, cols, density=0.5):
    a = rng.standard_normal((rows, cols)) * (rng.random((rows, cols)) < density)
    return SparseMatrix.from_dense(a)


def _random_pattern(rng, n, density=0.4):
    """Diagonal plus random off-diagonal entries; values keep the matrix diagonally dominant."""
    mask = (rng.random((n, n)) < density) | np.eye(n, dtype=bool)
    rows, cols = np.nonzero(mask)
    values = rng.standard_normal(rows.size)
    values[rows == cols] = np.sign(rng.standard_normal(n)) * (n + 1 + rng.random(n))
    return SolvePattern(n, rows, cols, rng.standard_normal(n)), values


def sample_primitives(rng):
    """``(rule, x)`` pairs covering every primitive kind."""
    n = 4
    out = [(elementwise(k, n), rng.uniform(-1.5, 1.5, n)) for k in ("tanh", "square", "sin", "cos", "exp")]
    aff = Affine(3, 2, points=2)
    out.append((aff, rng.standard_normal(aff.n_in)))
    out.append((SumOfSquares(n), rng.standard_normal(n)))
    out.append((Linear(_random_sparse(rng, 3, n), rng.standard_normal(3)), rng.standard_normal(n)))
    out.append((Gather(np.array([0, 2, 2, 3, 1]), n), rng.standard_normal(n)))
    out.append((ScatterAdd(np.array([1, 0, 1, 2]), 3), rng.standard_normal(n)))
    pattern, values = _random_pattern(rng, 4)
    out.append((SparseSolve(pattern), values))
    return out


def primitive_suite(trials=3, seed=0) -> SuiteResult:
    res = SuiteResult("primitives")
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    for t in range(trials):
        for rule, x in sample_primitives(rng):
            label = f"{rule.kind}#{t}"
            _, ctx = rule.forward(x)
            jac = rule.jacobian(ctx).to_scipy().toarray()
            res.check("jacobian", rel_err(jac, fd_jacobian(rule.evaluate, x)), GRAD_RTOL, label)
            m = rng.standard_normal((3, rule.n_out))
            res.check("pullback", rel_err(rule.pullback(ctx, m), m @ jac), 1e-12, label)
            ybar = rng.standard_normal(rule.n_out)
            z = weighted_hessian_dense(rule.weighted_hessian(ctx, ybar), rule.n_in)

            def weighted_grad(v):
                return rule.jacobian(rule.forward(v)[1]).to_scipy().T @ ybar

            res.check("weighted_hessian", rel_err(z, fd_hessian(weighted_grad, x)), HESS_RTOL, label)
            res.check("symmetry", float(np.max(np.abs(z - z.T), initial=0.0)), 0.0, label)
    res.seconds = time.perf_counter() - t0
    return res


# --- sparse solver -----------------------------------------------------------

def sparse_solver_suite(systems=50, n=5, seed=0) -> SuiteResult:
    res = SuiteResult("sparse_solver")
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    for s in range(systems):
        pattern, values = _random_pattern(rng, n, density=rng.uniform(0.1, 0.7))
        label = f"system#{s}"
        _, cache = solve_forward(values, pattern)
        jac = solve_jacobian_dense(cache, pattern)
        res.check("jacobian", rel_err(jac, fd_jacobian(lambda v: solve_forward(v, pattern)[0], values)), GRAD_RTOL, label)
        y = rng.standard_normal(n)
        z = solve_weighted_hessian(cache, y, pattern)

        def weighted_grad(v):
            return solve_jacobian_dense(solve_forward(v, pattern)[1], pattern).T @ y

        res.check("weighted_hessian", rel_err(z, fd_hessian(weighted_grad, values)), HESS_RTOL, label)
        res.check("symmetry", float(np.max(np.abs(z - z.T))), 0.0, label)
    res.seconds = time.perf_counter() - t0
    return res


# --- trust-region subproblem ---------------------------------------------------

def ball_minimum(b, g, delta, rng, samples=20000, polish=5):
    """Smallest model value over random ball samples, polished by SLSQP from the best few."""
    n = g.size
    d = rng.standard_normal((samples, n))
    d /= np.linalg.norm(d, axis=1)[:, None]
    r = rng.random(samples) ** (1.0 / n)
    pts = np.vstack([d * (r[:, None] * delta), d * delta])
    vals = pts @ g + 0.5 * np.einsum("ij,jk,ik->i", pts, b, pts)
    best = float(vals.min())
    cons = {"type": "ineq", "fun": lambda p: delta**2 - p @ p, "jac": lambda p: -2 * p}
    for i in np.argsort(vals)[:polish]:
        sol = scipy_minimize(lambda p: g @ p + 0.5 * p @ b @ p, pts[i], jac=lambda p: g + b @ p,
                             constraints=[cons], method="SLSQP", options={"ftol": 1e-15, "maxiter": 200})
        if np.linalg.norm(sol.x) <= delta * (1 + 1e-12):
            best = min(best, float(g @ sol.x + 0.5 * sol.x @ b @ sol.x))
    return best


def random_subproblem(rng, trial):
    """Random ``(B, g, delta)`` of dimension 1..4; every third trial is a constructed hard case."""
    n = int(rng.integers(1, 5))
    a = rng.standard_normal((n, n))
    b = a + a.T
    g = rng.standard_normal(n)
    delta = float(rng.exponential()) + 1e-3
    if trial % 3 == 0:
        w, v = np.linalg.eigh(b)
        if w[0] > 0:
            b -= (w[0] + 1.0) * np.eye(n)
        g -= v[:, 0] * (v[:, 0] @ g)  # orthogonal to the bottom eigenvector
        if trial % 2:
            delta *= 10.0
    elif trial % 5 == 1:
        b = b @ b  # positive semidefinite
    if trial % 7 == 0:
        g = np.zeros(n)
    return b, g, delta


def tr_subproblem_suite(trials=200, seed=0) -> SuiteResult:
    res = SuiteResult("tr_subproblem")
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    for t in range(trials):
        b, g, delta = random_subproblem(rng, t)
        sub = Subproblem(b, g)
        p = sub.solve(delta)
        label = f"trial#{t} (n={g.size}, delta={delta:.3g})"
        res.check("model_gap", max(0.0, sub.model(p) - ball_minimum(b, g, delta, rng)), 1e-8, label)
        res.check("norm_excess", max(0.0, np.linalg.norm(p) / delta - 1.0), 1e-8, label)
    res.seconds = time.perf_counter() - t0
    return res


def forward_convergence(sizes=(5, 10, 20)):
    """Max-norm errors of the discrete forward Poisson solve and the fitted order in h."""
    hs, errors = [], []
    for n in sizes:
        g = Grid2D(n)
        xy = g.coords
        u = solve_nonlinear_poisson(g, poisson_kappa, poisson_dkappa, poisson_source(xy[:, 0], xy[:, 1])[g.interior])
        errors.append(np.abs(u - poisson_exact(xy[:, 0], xy[:, 1])).max())
        hs.append(g.h)
    order = np.polyfit(np.log(hs), np.log(errors), 1)[0]
    return np.array(errors), float(order)


SUITES = {
    "tape": tape_suite,
    "primitives": primitive_suite,
    "sparse_solver": sparse_solver_suite,
    "tr_subproblem": tr_subproblem_suite,
}


def run_all(names=None, echo=print):
    results = []
    for name in names or SUITES:
        r = SUITES[name]()
        results.append(r)
        echo(r.summary())
        for f in r.failures[:10]:
            echo(f"    {f}")
    return results
