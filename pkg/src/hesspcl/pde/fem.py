"""Linear (P1) finite elements on a structured triangulation of the unit square.

The stiffness matrix is assembled from one coefficient value per element
(evaluated at the centroid), so the map from element coefficients to the
nonzero matrix entries is linear and fixed: ``values = M @ kappa``.  Rows and
columns of boundary vertices are eliminated (homogeneous Dirichlet data).
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from ..linalg import SparseMatrix
from ..nn import NetworkSpec, network_forward, register_network
from ..primitives import Linear, SumOfSquares
from ..sparse_solver import SolvePattern, SparseSolve, solve_forward
from ..tape import TapeBuilder
from .manufactured import Observations


def fem_kappa(x, y):
    return 1.0 / (1.0 + x**2 + y**2) + 1.0


@dataclass(frozen=True, eq=False)
class TriMesh:
    vertices: np.ndarray  # (nv, 2)
    triangles: np.ndarray  # (ne, 3), counter-clockwise

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        t = np.asarray(self.triangles, dtype=np.int64)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)
        if v.ndim != 2 or v.shape[1] != 2 or t.ndim != 2 or t.shape[1] != 3:
            raise ValueError("mesh needs (nv, 2) vertices and (ne, 3) triangles")
        if t.min() < 0 or t.max() >= v.shape[0]:
            raise ValueError("triangle references a missing vertex")
        if np.any(self.areas <= 0):
            raise ValueError("triangles must have positive (counter-clockwise) area")

    @classmethod
    def structured(cls, m=10):
        """``m x m`` cells, each split into two triangles along its rising diagonal."""
        if m < 1:
            raise ValueError("mesh needs at least one cell per side")
        t = np.linspace(0.0, 1.0, m + 1)
        x, y = np.meshgrid(t, t, indexing="ij")
        verts = np.column_stack([x.ravel(), y.ravel()])
        i, j = np.meshgrid(np.arange(m), np.arange(m), indexing="ij")
        i, j = i.ravel(), j.ravel()
        v00 = i * (m + 1) + j
        v10 = (i + 1) * (m + 1) + j
        v01 = i * (m + 1) + j + 1
        v11 = (i + 1) * (m + 1) + j + 1
        lower = np.column_stack([v00, v10, v11])
        upper = np.column_stack([v00, v11, v01])
        tris = np.stack([lower, upper], axis=1).reshape(-1, 3)
        return cls(verts, tris)

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def n_elements(self):
        return self.triangles.shape[0]

    @cached_property
    def areas(self):
        p = self.vertices[self.triangles]
        e1, e2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    @cached_property
    def centroids(self):
        return self.vertices[self.triangles].mean(axis=1)

    @cached_property
    def boundary(self):
        """Vertices on a boundary edge (an edge used by exactly one triangle)."""
        t = self.triangles
        edges = np.sort(np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]]), axis=1)
        uniq, counts = np.unique(edges, axis=0, return_counts=True)
        return np.unique(uniq[counts == 1])

    @cached_property
    def free(self):
        mask = np.ones(self.n_vertices, dtype=bool)
        mask[self.boundary] = False
        return np.flatnonzero(mask)


def local_stiffness(points, kappa=1.0):
    """P1 element matrix ``kappa * area * G^T G`` for one triangle ``points`` (3 x 2)."""
    p = np.asarray(points, dtype=float)
    d = np.array([[p[1, 0] - p[0, 0], p[2, 0] - p[0, 0]], [p[1, 1] - p[0, 1], p[2, 1] - p[0, 1]]])
    area = 0.5 * np.linalg.det(d)
    grads = np.linalg.solve(d.T, np.array([[-1.0, 1.0, 0.0], [-1.0, 0.0, 1.0]]))  # (2, 3)
    return kappa * abs(area) * grads.T @ grads


@dataclass(frozen=True, eq=False)
class StiffnessAssembly:
    """Fixed pattern of the reduced stiffness matrix and the linear map from element coefficients."""

    mesh: TriMesh
    pattern: SolvePattern
    matrix: SparseMatrix  # (pattern entries x elements)

    def stiffness(self, kappa_elements):
        return self.pattern.assemble(self.matrix.to_scipy() @ np.asarray(kappa_elements, dtype=float))


def assemble(mesh: TriMesh, rhs=None) -> StiffnessAssembly:
    """Build the reduced pattern and assembly map; ``rhs`` defaults to the unit-source load."""
    free = mesh.free
    dof = np.full(mesh.n_vertices, -1, dtype=np.int64)
    dof[free] = np.arange(free.size)
    rows, cols, elems, vals = [], [], [], []
    for e, tri in enumerate(mesh.triangles):
        ke = local_stiffness(mesh.vertices[tri])
        for a in range(3):
            for b in range(3):
                da, db = dof[tri[a]], dof[tri[b]]
                if da >= 0 and db >= 0:
                    rows.append(da)
                    cols.append(db)
                    elems.append(e)
                    vals.append(ke[a, b])
    rows, cols = np.array(rows), np.array(cols)
    n = free.size
    keys, entry = np.unique(rows * n + cols, return_inverse=True)
    if rhs is None:
        rhs = load_vector(mesh)
    pattern = SolvePattern(n, keys // n, keys % n, rhs)
    matrix = SparseMatrix.from_coo(entry.ravel(), np.array(elems), np.array(vals), (keys.size, mesh.n_elements))
    return StiffnessAssembly(mesh, pattern, matrix)


def load_vector(mesh: TriMesh):
    """Load for the unit source ``-div(kappa grad u) = 1`` on the free vertices."""
    b = np.zeros(mesh.n_vertices)
    np.add.at(b, mesh.triangles.ravel(), np.repeat(mesh.areas / 3.0, 3))
    return b[mesh.free]


def fem_observations(mesh: TriMesh, kappa=fem_kappa) -> Observations:
    """State at the free vertices from a forward solve with the true coefficient."""
    asm = assemble(mesh)
    c = mesh.centroids
    u, _ = solve_forward(asm.matrix.to_scipy() @ kappa(c[:, 0], c[:, 1]), asm.pattern)
    return Observations(u=u)


def nonpositive_elements(mesh: TriMesh, spec: NetworkSpec, theta):
    """Elements whose network coefficient at the centroid is not positive."""
    k = network_forward(spec, theta, mesh.centroids).ravel()
    return np.flatnonzero(k <= 0.0), k


def build_fem_poisson_loss(mesh: TriMesh, obs: Observations, spec: NetworkSpec, param_indices=None):
    """``sum_i (u_i(theta) - u_obs_i)^2`` with ``A(kappa_theta) u = f`` solved inside the tape."""
    if spec.input_dim != 2:
        raise ValueError("the spatial coefficient network takes (x, y) inputs")
    asm = assemble(mesh)
    u_obs = np.asarray(obs.u, dtype=float)
    if u_obs.shape != (asm.pattern.n,):
        raise ValueError(f"expected observations at {asm.pattern.n} free vertices, got {u_obs.shape}")
    builder = TapeBuilder(spec.n_params)
    params = builder.inputs if param_indices is None else np.asarray(param_indices)
    kappa = register_network(builder, spec, params, mesh.centroids)
    values = builder.add(Linear(asm.matrix), kappa)
    u = builder.add(SparseSolve(asm.pattern), values)
    r = builder.add(Linear(SparseMatrix.identity(u.size), -u_obs), u)
    builder.add(SumOfSquares(r.size), r)
    return builder.build()
