"""Explicit finite-element solver for the 3D elastodynamic sine-Gordon system."""

from .analysis import (
    NormReport,
    b_norm,
    convergence_order,
    discrete_error,
    l2_norm,
    max_in_time,
    star_norm,
)
from .assembly import (
    FeSpace,
    PhysicalParams,
    SymmetricSparseOperator,
    apply_dirichlet,
    assemble_mass,
    assemble_nonlinear_load,
    assemble_stiffness,
    build_space,
)
from .mesh import BoxMesh, boundary_dof_mask, build_box_mesh, max_diameter
from .problem import (
    BallInitialData,
    ExperimentConfig,
    StressField,
    example_config,
    initial_displacement,
    initial_velocity,
    recover_stress,
)
from .solver import MassSolver, StateHistory, Stepper, bootstrap, cfl_max_sigma, run, step

__version__ = "0.1.0"
