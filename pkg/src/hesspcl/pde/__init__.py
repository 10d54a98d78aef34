"""Benchmark problems: grids, manufactured data and loss-tape builders."""

from .fem import (
    StiffnessAssembly,
    TriMesh,
    assemble,
    build_fem_poisson_loss,
    fem_kappa,
    fem_observations,
    local_stiffness,
)
from .grid import (
    Grid2D,
    apply_flux_stencil,
    flux_matrix_in_kappa,
    solve_nonlinear_poisson,
    variable_laplacian,
)
from .losses import build_dnn_only_loss, build_heat_loss, build_poisson_fd_loss
from .manufactured import (
    Observations,
    add_noise,
    heat_exact,
    heat_kappa,
    heat_source,
    manufactured_heat,
    manufactured_poisson_nonlinear,
    poisson_dkappa,
    poisson_exact,
    poisson_kappa,
    poisson_source,
)
