"""Flux-corrected P1 finite elements for constrained parabolic optimal control.

The package solves tracking-type control problems governed by a
convection-dominated convection-diffusion equation with box constraints on
the distributed control.  Space is discretized by linear finite elements
stabilized with an algebraic flux correction whose limiter keeps both the
forward and the backward-in-time steps local-extremum diminishing; time uses
the implicit Euler method, and the coupled optimality system is resolved by
a fixed-point sweep over state, co-state, and clamped control.
"""

from .analysis import (
    ErrorRecord,
    attach_orders,
    eoc,
    h1_error,
    l2_error,
    oscillation_indicator,
    ritz_projection,
)
from .assembly import FemOperators, build_operators
from .errors import (
    ConfigError,
    FixedPointFailure,
    InvalidArgumentError,
    SolverFailure,
    StepFailure,
)
from .limiter import CorrectionFactors, FluxSet, kuzmin_factors
from .mesh import TriangleMesh, build_mesh, build_uniform_unit_square
from .problems import ExactSolution, ProblemSpec, box_clamp, builtin_problem
from .solver import (
    OuterReport,
    SolverConfig,
    Trajectory,
    cost_functional,
    solve_ocp,
)
from .stepping import (
    PicardReport,
    StepConfig,
    StepSystems,
    adjoint_step,
    clamp_control,
    state_step,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "CorrectionFactors",
    "ErrorRecord",
    "ExactSolution",
    "FemOperators",
    "FixedPointFailure",
    "FluxSet",
    "InvalidArgumentError",
    "OuterReport",
    "PicardReport",
    "ProblemSpec",
    "SolverConfig",
    "SolverFailure",
    "StepConfig",
    "StepFailure",
    "StepSystems",
    "Trajectory",
    "TriangleMesh",
    "adjoint_step",
    "attach_orders",
    "box_clamp",
    "build_mesh",
    "build_operators",
    "build_uniform_unit_square",
    "builtin_problem",
    "clamp_control",
    "cost_functional",
    "eoc",
    "h1_error",
    "kuzmin_factors",
    "l2_error",
    "oscillation_indicator",
    "ritz_projection",
    "solve_ocp",
    "state_step",
]
