"""Stabilizer-free weak Galerkin finite elements on polytopal meshes."""

from .analysis import (
    ConvergenceReport,
    ExactSolution,
    energy_error,
    get_solution,
    l2_error,
    norm_1h,
    project_Qh,
    rates,
)
from .discretization import Discretization
from .lambda_space import LambdaSpace, build_lambda_space, lambda_sample_check
from .mesh import (
    Mesh,
    build_mesh,
    build_quad_grid,
    build_quad_hex_grid,
    build_wedge_grid,
    geometry,
    split_cell,
)
from .solver import WGFunction, apply_dirichlet, assemble, solve, solve_poisson
from .study import StudyConfig, emit, run_study

__version__ = "0.1.0"
